#pragma once

#include "moma/core.hpp"

#include <Eigen/Dense>

#include <array>
#include <iosfwd>
#include <memory>
#include <vector>

namespace moma {

/// Raised when a transition has zero density under a model.
class OutOfSupport : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Transition density P_phi(s' | s, a) over unconstrained parameters phi.
///
/// Models are immutable snapshots: with_parameters returns a new model and
/// leaves the receiver untouched, so one instance may be read from many threads.
class TransitionModel {
public:
    virtual ~TransitionModel() = default;

    virtual std::size_t num_actions() const = 0;
    virtual std::size_t num_parameters() const = 0;
    virtual Eigen::VectorXd parameters() const = 0;
    virtual std::shared_ptr<const TransitionModel> with_parameters(const Eigen::VectorXd& phi) const = 0;

    /// Natural-log density of s_next given (s, a). Throws OutOfSupport on zero density.
    virtual double log_density(const StateVector& s, std::size_t a, const StateVector& s_next) const = 0;

    /// Adds weight * d/dphi log_density(s_next | s, a) into grad (length num_parameters()).
    virtual void accumulate_score(const StateVector& s, std::size_t a, const StateVector& s_next,
                                  double weight, std::span<double> grad) const = 0;

    virtual StateVector sample_next(const StateVector& s, std::size_t a, Rng& rng) const = 0;

    Eigen::VectorXd score(const StateVector& s, std::size_t a, const StateVector& s_next) const;
};

/// Known structural constants of the two-component Gaussian walk: per action the
/// means of both components, plus one shared component variance.
struct MixtureWalkFamily {
    std::vector<std::array<double, 2>> means;
    double variance = 0.1;

    /// Left (-2, 0), Stay (0, 2), Right (0, 2).
    static MixtureWalkFamily random_walk(double variance = 0.1);
    std::size_t num_actions() const noexcept { return means.size(); }
};

/// Delta s | a  ~  psi_a N(mu_{1,a}, var) + (1 - psi_a) N(mu_{2,a}, var).
///
/// Parameters are the logits of psi_a, one per action.
class MixtureWalkModel final : public TransitionModel {
public:
    MixtureWalkModel(MixtureWalkFamily family, const std::vector<double>& psi);
    static MixtureWalkModel from_logits(MixtureWalkFamily family, const Eigen::VectorXd& logits);

    const MixtureWalkFamily& family() const noexcept { return family_; }
    double psi(std::size_t a) const { return psi_.at(a); }
    const std::vector<double>& psi() const noexcept { return psi_; }

    std::size_t num_actions() const override { return family_.num_actions(); }
    std::size_t num_parameters() const override { return family_.num_actions(); }
    Eigen::VectorXd parameters() const override { return logits_; }
    std::shared_ptr<const TransitionModel> with_parameters(const Eigen::VectorXd& phi) const override;

    double log_density(const StateVector& s, std::size_t a, const StateVector& s_next) const override;
    void accumulate_score(const StateVector& s, std::size_t a, const StateVector& s_next, double weight,
                          std::span<double> grad) const override;
    StateVector sample_next(const StateVector& s, std::size_t a, Rng& rng) const override;

    /// Density of the increment itself (no state offset).
    double increment_log_density(std::size_t a, double delta) const;
    /// Posterior probability that delta came from the first component.
    double responsibility(std::size_t a, double delta) const;

private:
    MixtureWalkModel(MixtureWalkFamily family, std::vector<double> psi, Eigen::VectorXd logits);

    MixtureWalkFamily family_;
    std::vector<double> psi_;
    Eigen::VectorXd logits_;
};

double logistic(double x);
double logit(double p);

struct EmOptions {
    double initial_psi = 0.5;
    double tolerance = 1e-10;
    int max_iterations = 500;
};

struct EmFitResult {
    MixtureWalkModel model;
    /// true where an action had no transitions and kept its initial weight.
    std::vector<bool> unfitted;
    std::vector<int> iterations;
    /// Per action, the observed-data log-likelihood after every EM iteration (index 0 = initial).
    std::vector<std::vector<double>> log_likelihood_trace;
};

/// Maximum-likelihood mixture weights by EM with the family's means and variance held fixed.
EmFitResult em_fit(const OfflineDataset& dataset, const MixtureWalkFamily& family, const EmOptions& options = {});

/// Flat `key = value` checkpoint: psi_left/psi_stay/psi_right plus the structural constants.
void write_model_checkpoint(const MixtureWalkModel& model, std::ostream& out);
MixtureWalkModel read_model_checkpoint(std::istream& in);

} // namespace moma
