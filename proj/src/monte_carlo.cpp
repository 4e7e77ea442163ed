#include "moma/monte_carlo.hpp"

#include <algorithm>
#include <cmath>

namespace moma {

void RolloutConfig::validate() const {
    (void)DiscountConfig(gamma);
    if (horizon_cap < 1) throw InvalidInput("RolloutConfig: horizon_cap must be at least 1");
    if (trajectories < 1) throw InvalidInput("RolloutConfig: trajectories must be positive");
}

OccupancySample sample_occupancy(const TransitionModel& model, const Policy& policy, const TaskSpec& task,
                                 const RolloutConfig& config, Rng& rng) {
    OccupancySample out;
    StateVector s = task.sample_initial_state(rng);
    const double stop = 1.0 - config.gamma;
    while (true) {
        if (uniform01(rng) < stop) break;
        if (out.steps >= config.horizon_cap) {
            out.truncated = true;
            break;
        }
        const std::size_t a = sample_action(policy.action_distribution(s), rng);
        s = model.sample_next(s, a, rng);
        ++out.steps;
        if (task.is_terminal(s)) {
            out.state = s;
            out.terminated = true;
            return out;
        }
    }
    out.state = s;
    out.action = sample_action(policy.action_distribution(s), rng);
    return out;
}

double mc_q_estimate(const TransitionModel& model, const Policy& policy, const TaskSpec& task, const StateVector& s,
                     std::size_t a, const RolloutConfig& config, Rng& rng, RolloutCounters* counters) {
    if (counters != nullptr) ++counters->rollouts;
    StateVector current = model.sample_next(s, a, rng);
    double q = task.reward(s, a, current);
    if (task.is_terminal(current)) return q;
    const double stop = 1.0 - config.gamma;
    for (int steps = 1;; ++steps) {
        if (uniform01(rng) < stop) break;
        if (steps >= config.horizon_cap) {
            if (counters != nullptr) ++counters->truncations;
            break;
        }
        const std::size_t action = sample_action(policy.action_distribution(current), rng);
        StateVector next = model.sample_next(current, action, rng);
        q += task.reward(current, action, next);
        if (task.is_terminal(next)) break;
        current = next;
    }
    return q;
}

double mc_value_estimate(const TransitionModel& model, const Policy& policy, const TaskSpec& task,
                         const StateVector& s, const RolloutConfig& config, Rng& rng, RolloutCounters* counters) {
    if (task.is_terminal(s)) return 0.0;
    const std::size_t a = sample_action(policy.action_distribution(s), rng);
    return mc_q_estimate(model, policy, task, s, a, config, rng, counters);
}

double mc_augmented_q(const TransitionModel& model, const Policy& policy, const TaskSpec& task, const MirrorMap& map,
                      double eta, const StateVector& s, std::size_t a, const RolloutConfig& config, Rng& rng,
                      RolloutCounters* counters) {
    const auto offset = augmented_q_offset(map, policy.action_distribution(s), eta);
    return mc_q_estimate(model, policy, task, s, a, config, rng, counters) + offset.at(a);
}

MeanEstimate summarize(std::vector<double> values) {
    MeanEstimate out;
    out.count = values.size();
    if (values.empty()) return out;
    std::sort(values.begin(), values.end());
    double total = 0.0;
    for (double v : values) total += v;
    out.mean = total / static_cast<double>(values.size());
    if (values.size() > 1) {
        std::vector<double> sq(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) sq[i] = (values[i] - out.mean) * (values[i] - out.mean);
        std::sort(sq.begin(), sq.end());
        double ss = 0.0;
        for (double v : sq) ss += v;
        out.standard_error = std::sqrt(ss / static_cast<double>(values.size() - 1) / static_cast<double>(values.size()));
    }
    return out;
}

MeanEstimate mc_q_average(const TransitionModel& model, const Policy& policy, const TaskSpec& task,
                          const StateVector& s, std::size_t a, const RolloutConfig& config, Rng& rng,
                          RolloutCounters* counters) {
    config.validate();
    std::vector<double> draws(static_cast<std::size_t>(config.trajectories));
    for (double& d : draws) d = mc_q_estimate(model, policy, task, s, a, config, rng, counters);
    return summarize(std::move(draws));
}

MeanEstimate mc_value_average(const TransitionModel& model, const Policy& policy, const TaskSpec& task,
                              const StateVector& s, const RolloutConfig& config, Rng& rng, RolloutCounters* counters) {
    config.validate();
    std::vector<double> draws(static_cast<std::size_t>(config.trajectories));
    for (double& d : draws) d = mc_value_estimate(model, policy, task, s, config, rng, counters);
    return summarize(std::move(draws));
}

} // namespace moma
