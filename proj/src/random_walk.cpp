#include "moma/random_walk.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numeric>

namespace moma {

RandomWalkEnv::RandomWalkEnv(double component_variance, std::vector<double> psi, int max_episode_length)
    : model_(std::make_shared<const MixtureWalkModel>(MixtureWalkFamily::random_walk(component_variance), psi)),
      max_episode_length_(max_episode_length) {
    if (max_episode_length_ < 1) throw InvalidInput("RandomWalkEnv: max_episode_length must be positive");
}

double RandomWalkEnv::reward(double s_next) {
    if (s_next < -3.0 || s_next >= 3.0) return 0.0;
    if (s_next <= 0.0) return -2.0;
    return -1.8;
}

bool RandomWalkEnv::is_terminal(double s) { return s < -3.0 || s >= 3.0; }

StepResult RandomWalkEnv::step(const StateVector& s, std::size_t a, Rng& rng) const {
    if (is_terminal(s.scalar())) throw InvalidInput("RandomWalkEnv::step: state is terminal");
    if (a >= model_->num_actions()) throw InvalidInput("RandomWalkEnv::step: action out of range");
    StepResult out;
    out.next_state = model_->sample_next(s, a, rng);
    out.reward = reward(out.next_state.scalar());
    out.terminal = is_terminal(out.next_state.scalar());
    return out;
}

StateVector RandomWalkEnv::sample_initial_state(Rng& rng) const {
    return StateVector(-2.0 + 4.0 * uniform01(rng));
}

TaskSpec RandomWalkEnv::task() const {
    TaskSpec task;
    task.num_actions = model_->num_actions();
    task.reward = [](const StateVector&, std::size_t, const StateVector& s_next) { return reward(s_next.scalar()); };
    task.is_terminal = [](const StateVector& s) { return is_terminal(s.scalar()); };
    task.sample_initial_state = [](Rng& rng) { return StateVector(-2.0 + 4.0 * uniform01(rng)); };
    return task;
}

FixedPolicy behavior_policy() { return FixedPolicy(SimplexVector({0.9, 0.05, 0.05})); }

OfflineDataset generate_offline_dataset(const RandomWalkEnv& env, const Policy& behavior, int episodes,
                                        std::uint64_t seed, double gamma) {
    if (episodes < 1) throw InvalidInput("generate_offline_dataset: episodes must be positive");
    std::vector<Transition> transitions;
    for (int e = 0; e < episodes; ++e) {
        Rng rng = make_stream(seed, {static_cast<std::uint64_t>(e)});
        StateVector s = env.sample_initial_state(rng);
        for (int t = 0; t < env.max_episode_length(); ++t) {
            const std::size_t a = sample_action(behavior.action_distribution(s), rng);
            const StepResult step = env.step(s, a, rng);
            transitions.push_back({s, a, step.reward, step.next_state, step.terminal});
            if (step.terminal) break;
            s = step.next_state;
        }
    }
    return OfflineDataset(std::move(transitions), env.family().num_actions(), gamma, seed);
}

EvaluationReport EvaluationReport::from_lengths(std::vector<int> lengths) {
    if (lengths.empty()) throw InvalidInput("EvaluationReport: no episodes");
    EvaluationReport r;
    r.episodes = lengths.size();
    const double n = static_cast<double>(lengths.size());
    r.mean = std::accumulate(lengths.begin(), lengths.end(), 0.0) / n;
    if (lengths.size() > 1) {
        double ss = 0.0;
        for (int l : lengths) ss += (l - r.mean) * (l - r.mean);
        r.std = std::sqrt(ss / (n - 1.0));
    }
    r.lengths = std::move(lengths);
    return r;
}

nlohmann::json EvaluationReport::to_json() const {
    return {{"mean", mean}, {"std", std}, {"episodes", episodes}, {"lengths", lengths}};
}

EvaluationReport EvaluationReport::from_json(const nlohmann::json& j) {
    return from_lengths(j.at("lengths").get<std::vector<int>>());
}

namespace {

int run_episode(const RandomWalkEnv& env, const Policy& policy, Rng& rng) {
    StateVector s = env.sample_initial_state(rng);
    for (int t = 1; t <= env.max_episode_length(); ++t) {
        const std::size_t a = sample_action(policy.action_distribution(s), rng);
        const StepResult step = env.step(s, a, rng);
        if (step.terminal) return t;
        s = step.next_state;
    }
    return env.max_episode_length();
}

} // namespace

EvaluationReport evaluate_policy(const RandomWalkEnv& env, const Policy& policy, int episodes, std::uint64_t seed) {
    if (episodes < 1) throw InvalidInput("evaluate_policy: episodes must be positive");
    std::vector<int> lengths(static_cast<std::size_t>(episodes));
    for (int e = 0; e < episodes; ++e) {
        Rng rng = make_stream(seed, {static_cast<std::uint64_t>(e)});
        lengths[static_cast<std::size_t>(e)] = run_episode(env, policy, rng);
    }
    return EvaluationReport::from_lengths(std::move(lengths));
}

EvaluationReport evaluate_mixture(const RandomWalkEnv& env, std::span<const std::shared_ptr<const Policy>> members,
                                  int episodes, std::uint64_t seed) {
    if (episodes < 1) throw InvalidInput("evaluate_mixture: episodes must be positive");
    if (members.empty()) throw InvalidInput("evaluate_mixture: no member policies");
    std::vector<int> lengths(static_cast<std::size_t>(episodes));
    const SimplexVector pick = SimplexVector::uniform(members.size());
    for (int e = 0; e < episodes; ++e) {
        Rng rng = make_stream(seed, {static_cast<std::uint64_t>(e)});
        const auto& policy = *members[sample_action(pick, rng)];
        lengths[static_cast<std::size_t>(e)] = run_episode(env, policy, rng);
    }
    return EvaluationReport::from_lengths(std::move(lengths));
}

} // namespace moma
