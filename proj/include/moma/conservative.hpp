#pragma once

#include "moma/confidence_set.hpp"
#include "moma/monte_carlo.hpp"

#include <memory>
#include <vector>

namespace moma {

struct PrimalDualConfig {
    double kappa1 = 0.1;
    /// 0 keeps lambda fixed.
    double kappa2 = 0.0;
    double lambda_init = 3.0;
    double lambda_min = 0.0;
    double lambda_max = 100.0;
    int steps = 150;
    int rollout_count = 300;
    int rollout_horizon_cap = 200;

    void validate() const;
    RolloutConfig rollout(double gamma) const { return {gamma, rollout_horizon_cap, rollout_count}; }
};

/// Raised when an iterate or gradient becomes non-finite.
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ModelGradientEstimate {
    Eigen::VectorXd gradient;
    Eigen::VectorXd standard_error;
    /// V of the initial distribution under the model, from the same occupancy samples.
    double value_estimate = 0.0;
    std::size_t sample_count = 0;
    std::uint64_t truncations = 0;
};

/// Monte Carlo estimate of grad_phi V^pi_{P_phi}(mu0):
///   1/(1-gamma) * E_{(s,a)~d, s'~P}[(r(s,a,s') + gamma V(s')) grad log P(s'|s,a)],
/// with V(s') from one nested geometric-stopping rollout per outer sample.
ModelGradientEstimate estimate_model_gradient(const TransitionModel& model, const Policy& policy,
                                              const TaskSpec& task, const RolloutConfig& config, Rng& rng);

struct PdState {
    Eigen::VectorXd phi;
    double lambda = 0.0;
};

/// One primal-dual update given the gradient pieces:
///   phi <- phi - kappa1 (grad V + lambda grad gap),  lambda <- Proj_Lambda(lambda + kappa2 (gap - alpha_n)).
PdState pd_update(const PdState& state, const Eigen::VectorXd& value_gradient, const Eigen::VectorXd& gap_gradient,
                  double gap, double alpha_n, const PrimalDualConfig& config);

struct PdDiagnostics {
    int k = 0;
    double value = 0.0;
    double gap = 0.0;
    double lambda = 0.0;
    double gradient_norm = 0.0;
};

struct PdStepResult {
    std::shared_ptr<const TransitionModel> model;
    double lambda = 0.0;
    PdDiagnostics diagnostics;
};

PdStepResult pd_step(const TransitionModel& model, double lambda, const Policy& policy, const TaskSpec& task,
                     const ConfidenceSetSpec& spec, const PrimalDualConfig& config, double gamma, Rng& rng);

struct ConservativeResult {
    std::shared_ptr<const TransitionModel> model;
    double lambda = 0.0;
    std::vector<PdDiagnostics> diagnostics;
};

/// K primal-dual steps from the MLE; the last iterate is the pessimistic model.
ConservativeResult conservative_model(std::shared_ptr<const TransitionModel> mle, const Policy& policy,
                                      const TaskSpec& task, const ConfidenceSetSpec& spec,
                                      const PrimalDualConfig& config, double gamma, Rng& rng);

} // namespace moma
