#pragma once

#include "moma/dynamics.hpp"
#include "moma/mirror.hpp"

namespace moma {

struct RolloutConfig {
    double gamma = 0.4;
    int horizon_cap = 200;
    int trajectories = 300;

    void validate() const;
};

/// One draw from the discounted occupancy d_P^pi, realized by geometric stopping.
struct OccupancySample {
    StateVector state;
    std::size_t action = 0;
    /// The rollout entered a terminal state before the stopping time; `state` is that terminal state
    /// and `action` is meaningless.
    bool terminated = false;
    /// The stopping time exceeded horizon_cap; `state` is the state at the cap.
    bool truncated = false;
    int steps = 0;
};

/// s0 ~ initial distribution, then continue with probability gamma per step; returns s_T and a ~ pi(s_T).
OccupancySample sample_occupancy(const TransitionModel& model, const Policy& policy, const TaskSpec& task,
                                 const RolloutConfig& config, Rng& rng);

/// Counts rollouts cut off by the horizon cap.
struct RolloutCounters {
    std::uint64_t rollouts = 0;
    std::uint64_t truncations = 0;
};

/// Undiscounted reward sum along a geometrically stopped rollout starting with (s, a):
/// an unbiased estimate of Q(s, a). Entering a terminal state ends the rollout.
double mc_q_estimate(const TransitionModel& model, const Policy& policy, const TaskSpec& task, const StateVector& s,
                     std::size_t a, const RolloutConfig& config, Rng& rng, RolloutCounters* counters = nullptr);

/// Unbiased estimate of V(s): a ~ pi(s), then mc_q_estimate. Zero at terminal states.
double mc_value_estimate(const TransitionModel& model, const Policy& policy, const TaskSpec& task,
                         const StateVector& s, const RolloutConfig& config, Rng& rng,
                         RolloutCounters* counters = nullptr);

/// mc_q_estimate plus the mirror-map offset (1/eta) grad omega(pi(s))_a.
double mc_augmented_q(const TransitionModel& model, const Policy& policy, const TaskSpec& task, const MirrorMap& map,
                      double eta, const StateVector& s, std::size_t a, const RolloutConfig& config, Rng& rng,
                      RolloutCounters* counters = nullptr);

struct MeanEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
    std::size_t count = 0;
};

/// Sample mean and standard error of `values` (summed in sorted order so the result
/// does not depend on the order the values were produced in).
MeanEstimate summarize(std::vector<double> values);

/// Average of config.trajectories independent mc_q_estimate draws.
MeanEstimate mc_q_average(const TransitionModel& model, const Policy& policy, const TaskSpec& task,
                          const StateVector& s, std::size_t a, const RolloutConfig& config, Rng& rng,
                          RolloutCounters* counters = nullptr);

/// Average of config.trajectories independent mc_value_estimate draws from s.
MeanEstimate mc_value_average(const TransitionModel& model, const Policy& policy, const TaskSpec& task,
                              const StateVector& s, const RolloutConfig& config, Rng& rng,
                              RolloutCounters* counters = nullptr);

} // namespace moma
