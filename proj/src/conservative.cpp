#include "moma/conservative.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

namespace moma {

void PrimalDualConfig::validate() const {
    if (!(kappa1 > 0.0) || !std::isfinite(kappa1)) throw InvalidInput("PrimalDualConfig: kappa1 must be positive");
    if (!(kappa2 >= 0.0) || !std::isfinite(kappa2)) throw InvalidInput("PrimalDualConfig: kappa2 must be nonnegative");
    if (!(lambda_min >= 0.0) || !(lambda_min <= lambda_max)) throw InvalidInput("PrimalDualConfig: invalid lambda interval");
    if (!(lambda_init >= lambda_min && lambda_init <= lambda_max)) {
        throw InvalidInput("PrimalDualConfig: lambda_init outside the lambda interval");
    }
    if (steps < 0) throw InvalidInput("PrimalDualConfig: steps must be nonnegative");
    if (rollout_count < 1 || rollout_horizon_cap < 1) throw InvalidInput("PrimalDualConfig: invalid rollout budget");
}

ModelGradientEstimate estimate_model_gradient(const TransitionModel& model, const Policy& policy,
                                              const TaskSpec& task, const RolloutConfig& config, Rng& rng) {
    config.validate();
    const auto p = static_cast<Eigen::Index>(model.num_parameters());
    const auto n = static_cast<std::size_t>(config.trajectories);
    const double horizon = 1.0 / (1.0 - config.gamma);

    Eigen::MatrixXd contributions = Eigen::MatrixXd::Zero(p, static_cast<Eigen::Index>(n));
    std::vector<double> rewards(n, 0.0);
    RolloutCounters counters;
    for (std::size_t j = 0; j < n; ++j) {
        const OccupancySample sample = sample_occupancy(model, policy, task, config, rng);
        if (sample.truncated) ++counters.truncations;
        // Past termination the occupancy sits in an absorbing, reward-free state whose dynamics
        // do not depend on phi.
        if (sample.terminated) continue;
        const StateVector next = model.sample_next(sample.state, sample.action, rng);
        const double r = task.reward(sample.state, sample.action, next);
        rewards[j] = r;
        const double v_next = mc_value_estimate(model, policy, task, next, config, rng, &counters);
        const double weight = horizon * (r + config.gamma * v_next);
        auto column = contributions.col(static_cast<Eigen::Index>(j));
        model.accumulate_score(sample.state, sample.action, next, weight,
                               std::span<double>(column.data(), static_cast<std::size_t>(p)));
    }

    ModelGradientEstimate out;
    out.sample_count = n;
    out.truncations = counters.truncations;
    out.gradient.resize(p);
    out.standard_error.resize(p);
    for (Eigen::Index k = 0; k < p; ++k) {
        const Eigen::RowVectorXd row = contributions.row(k);
        const auto est = summarize(std::vector<double>(row.data(), row.data() + row.size()));
        out.gradient[k] = est.mean;
        out.standard_error[k] = est.standard_error;
    }
    out.value_estimate = horizon * summarize(rewards).mean;
    if (out.truncations > 0) spdlog::debug("estimate_model_gradient: {} truncated rollouts", out.truncations);
    return out;
}

PdState pd_update(const PdState& state, const Eigen::VectorXd& value_gradient, const Eigen::VectorXd& gap_gradient,
                  double gap, double alpha_n, const PrimalDualConfig& config) {
    if (value_gradient.size() != state.phi.size() || gap_gradient.size() != state.phi.size()) {
        throw InvalidInput("pd_update: gradient size mismatch");
    }
    if (!(state.lambda >= config.lambda_min && state.lambda <= config.lambda_max)) {
        throw InvalidInput("pd_update: lambda outside the lambda interval");
    }
    const Eigen::VectorXd direction = value_gradient + state.lambda * gap_gradient;
    if (!direction.allFinite() || !std::isfinite(gap)) {
        throw NumericalFailure("pd_update: non-finite Lagrangian gradient (|grad V| = " +
                               format_real(value_gradient.norm()) + ", gap = " + format_real(gap) + ")");
    }
    PdState next;
    next.phi = state.phi - config.kappa1 * direction;
    next.lambda = state.lambda;
    if (config.kappa2 > 0.0) {
        next.lambda = std::clamp(state.lambda + config.kappa2 * (gap - alpha_n), config.lambda_min, config.lambda_max);
    }
    return next;
}

PdStepResult pd_step(const TransitionModel& model, double lambda, const Policy& policy, const TaskSpec& task,
                     const ConfidenceSetSpec& spec, const PrimalDualConfig& config, double gamma, Rng& rng) {
    const auto value = estimate_model_gradient(model, policy, task, config.rollout(gamma), rng);
    const double gap = loss_gap(model, spec);
    const Eigen::VectorXd gap_grad = gap_gradient(model, spec.dataset());
    const PdState next = pd_update({model.parameters(), lambda}, value.gradient, gap_grad, gap, spec.alpha_n(), config);
    if (!next.phi.allFinite()) throw NumericalFailure("pd_step: non-finite model parameters");

    PdStepResult out;
    out.model = model.with_parameters(next.phi);
    out.lambda = next.lambda;
    out.diagnostics.value = value.value_estimate;
    out.diagnostics.gap = gap;
    out.diagnostics.lambda = next.lambda;
    out.diagnostics.gradient_norm = (value.gradient + lambda * gap_grad).norm();
    return out;
}

ConservativeResult conservative_model(std::shared_ptr<const TransitionModel> mle, const Policy& policy,
                                      const TaskSpec& task, const ConfidenceSetSpec& spec,
                                      const PrimalDualConfig& config, double gamma, Rng& rng) {
    config.validate();
    if (!mle) throw InvalidInput("conservative_model: null model");
    ConservativeResult out;
    out.model = std::move(mle);
    out.lambda = config.lambda_init;
    for (int k = 0; k < config.steps; ++k) {
        PdStepResult step;
        try {
            step = pd_step(*out.model, out.lambda, policy, task, spec, config, gamma, rng);
        } catch (const NumericalFailure& e) {
            throw NumericalFailure("conservative_model step " + std::to_string(k) + ": " + e.what());
        }
        if (!(step.lambda >= config.lambda_min && step.lambda <= config.lambda_max)) {
            throw NumericalFailure("conservative_model: lambda left its interval");
        }
        step.diagnostics.k = k;
        out.model = std::move(step.model);
        out.lambda = step.lambda;
        out.diagnostics.push_back(step.diagnostics);
    }
    return out;
}

} // namespace moma
