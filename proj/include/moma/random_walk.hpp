#pragma once

#include "moma/dynamics.hpp"

#include <nlohmann/json_fwd.hpp>

#include <memory>
#include <vector>

namespace moma {

inline constexpr std::size_t kLeft = 0;
inline constexpr std::size_t kStay = 1;
inline constexpr std::size_t kRight = 2;

struct StepResult {
    StateVector next_state;
    double reward = 0.0;
    bool terminal = false;
};

/// One-dimensional walk with two terminal goal regions (s < -3 and s >= 3).
class RandomWalkEnv {
public:
    explicit RandomWalkEnv(double component_variance = 0.1, std::vector<double> psi = {0.6, 0.6, 0.4},
                           int max_episode_length = 50);

    static double reward(double s_next);
    static bool is_terminal(double s);

    StepResult step(const StateVector& s, std::size_t a, Rng& rng) const;
    StateVector sample_initial_state(Rng& rng) const;

    std::shared_ptr<const MixtureWalkModel> true_model() const noexcept { return model_; }
    const MixtureWalkFamily& family() const noexcept { return model_->family(); }
    int max_episode_length() const noexcept { return max_episode_length_; }

    /// Reward, terminal predicate and U(-2, 2) initial states as seen by the learner.
    TaskSpec task() const;

private:
    std::shared_ptr<const MixtureWalkModel> model_;
    int max_episode_length_;
};

/// Left 0.9, Stay 0.05, Right 0.05 in every state.
FixedPolicy behavior_policy();

/// Rolls `behavior` for `episodes` episodes from fresh initial states until termination
/// or the episode cap. Episode e draws from its own stream of `seed`.
OfflineDataset generate_offline_dataset(const RandomWalkEnv& env, const Policy& behavior, int episodes,
                                        std::uint64_t seed, double gamma = 0.4);

struct EvaluationReport {
    double mean = 0.0;
    /// Sample standard deviation; 0 for a single episode.
    double std = 0.0;
    std::size_t episodes = 0;
    std::vector<int> lengths;

    static EvaluationReport from_lengths(std::vector<int> lengths);
    nlohmann::json to_json() const;
    static EvaluationReport from_json(const nlohmann::json& j);
};

/// Online episodes in the true environment; length is the number of steps until a terminal
/// state, or the episode cap.
EvaluationReport evaluate_policy(const RandomWalkEnv& env, const Policy& policy, int episodes, std::uint64_t seed);

/// Uniform mixture: every episode first draws one member policy and follows it throughout.
EvaluationReport evaluate_mixture(const RandomWalkEnv& env, std::span<const std::shared_ptr<const Policy>> members,
                                  int episodes, std::uint64_t seed);

} // namespace moma
