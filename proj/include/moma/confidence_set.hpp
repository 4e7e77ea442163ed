#pragma once

#include "moma/dynamics.hpp"

#include <memory>

namespace moma {

/// Mean negative log-density of the dataset's transitions.
/// Throws OutOfSupport naming the first transition with zero density.
double empirical_nll(const TransitionModel& model, const OfflineDataset& dataset);

/// Gradient of the loss gap, i.e. the mean negated score over the dataset.
Eigen::VectorXd gap_gradient(const TransitionModel& model, const OfflineDataset& dataset);

/// The set of models whose loss gap to the fitted reference is at most alpha_n.
class ConfidenceSetSpec {
public:
    ConfidenceSetSpec(std::shared_ptr<const OfflineDataset> dataset, double reference_loss, double alpha_n);

    /// Reference loss from `reference` (the MLE) and radius alpha_n = alpha_c / n.
    static ConfidenceSetSpec from_reference(std::shared_ptr<const OfflineDataset> dataset,
                                            const TransitionModel& reference, double alpha_c);

    const OfflineDataset& dataset() const noexcept { return *dataset_; }
    double reference_loss() const noexcept { return reference_loss_; }
    double alpha_n() const noexcept { return alpha_n_; }

private:
    std::shared_ptr<const OfflineDataset> dataset_;
    double reference_loss_;
    double alpha_n_;
};

/// E_n(P) = L_n(P) - L_n(P_hat).
double loss_gap(const TransitionModel& model, const ConfidenceSetSpec& spec);

bool in_confidence_set(const TransitionModel& model, const ConfidenceSetSpec& spec);

} // namespace moma
