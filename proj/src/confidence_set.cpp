#include "moma/confidence_set.hpp"

#include <cmath>
#include <string>

namespace moma {

double empirical_nll(const TransitionModel& model, const OfflineDataset& dataset) {
    double total = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const Transition& t = dataset[i];
        double value = 0.0;
        try {
            value = model.log_density(t.state, t.action, t.next_state);
        } catch (const OutOfSupport& e) {
            throw OutOfSupport("transition " + std::to_string(i) + " is out of support: " + e.what());
        }
        if (!std::isfinite(value)) throw OutOfSupport("transition " + std::to_string(i) + " has zero density");
        total -= value;
    }
    return total / static_cast<double>(dataset.size());
}

Eigen::VectorXd gap_gradient(const TransitionModel& model, const OfflineDataset& dataset) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.num_parameters()));
    const std::span<double> out(grad.data(), static_cast<std::size_t>(grad.size()));
    const double weight = -1.0 / static_cast<double>(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const Transition& t = dataset[i];
        try {
            model.accumulate_score(t.state, t.action, t.next_state, weight, out);
        } catch (const OutOfSupport& e) {
            throw OutOfSupport("transition " + std::to_string(i) + " is out of support: " + e.what());
        }
    }
    return grad;
}

ConfidenceSetSpec::ConfidenceSetSpec(std::shared_ptr<const OfflineDataset> dataset, double reference_loss,
                                     double alpha_n)
    : dataset_(std::move(dataset)), reference_loss_(reference_loss), alpha_n_(alpha_n) {
    if (!dataset_) throw InvalidInput("ConfidenceSetSpec: null dataset");
    if (!(alpha_n_ >= 0.0) || !std::isfinite(alpha_n_)) throw InvalidInput("ConfidenceSetSpec: alpha_n must be >= 0");
    if (!std::isfinite(reference_loss_)) throw InvalidInput("ConfidenceSetSpec: non-finite reference loss");
}

ConfidenceSetSpec ConfidenceSetSpec::from_reference(std::shared_ptr<const OfflineDataset> dataset,
                                                    const TransitionModel& reference, double alpha_c) {
    if (!dataset) throw InvalidInput("ConfidenceSetSpec: null dataset");
    const double loss = empirical_nll(reference, *dataset);
    const double alpha_n = alpha_c / static_cast<double>(dataset->size());
    return ConfidenceSetSpec(std::move(dataset), loss, alpha_n);
}

double loss_gap(const TransitionModel& model, const ConfidenceSetSpec& spec) {
    return empirical_nll(model, spec.dataset()) - spec.reference_loss();
}

bool in_confidence_set(const TransitionModel& model, const ConfidenceSetSpec& spec) {
    return loss_gap(model, spec) <= spec.alpha_n();
}

} // namespace moma
