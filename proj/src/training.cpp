#include "moma/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace moma {

void MomaSettings::validate() const {
    if (iterations < 0) throw InvalidInput("MomaSettings: iterations must be nonnegative");
    if (actor_steps < 1) throw InvalidInput("MomaSettings: actor_steps must be positive");
    if (!theory_eta && !(eta > 0.0)) throw InvalidInput("MomaSettings: eta must be positive");
    if (mc_number < 1 || horizon_cap < 1 || probe_rollouts < 1) throw InvalidInput("MomaSettings: invalid rollout budget");
    if (!(alpha_c >= 0.0)) throw InvalidInput("MomaSettings: alpha_c must be nonnegative");
    (void)DiscountConfig(gamma);
    pd.validate();
}

double MomaSettings::effective_eta(std::size_t num_actions) const {
    if (!theory_eta) return eta;
    const double t = std::max(iterations, 1);
    return (1.0 - gamma) * std::sqrt(2.0 * std::log(static_cast<double>(num_actions)) / t);
}

std::size_t TrainingTrace::iterations() const {
    std::size_t n = 0;
    for (const auto& r : records) n = std::max(n, static_cast<std::size_t>(r.t));
    return n;
}

std::vector<TraceRecord> TrainingTrace::at_probe(double probe_state) const {
    std::vector<TraceRecord> out;
    for (const auto& r : records) {
        if (r.probe_state == probe_state) out.push_back(r);
    }
    return out;
}

std::vector<double> describe_model(const TransitionModel& model) {
    if (const auto* mixture = dynamic_cast<const MixtureWalkModel*>(&model)) return mixture->psi();
    const Eigen::VectorXd phi = model.parameters();
    return {phi.data(), phi.data() + phi.size()};
}

namespace {

std::vector<StateVector> sample_policy_states(const TransitionModel& model, const Policy& policy, const TaskSpec& task,
                                              const RolloutConfig& rollout, int count, Rng& rng) {
    std::vector<StateVector> states;
    states.reserve(static_cast<std::size_t>(count));
    const long max_attempts = 1000L * count;
    for (long attempt = 0; static_cast<int>(states.size()) < count; ++attempt) {
        if (attempt >= max_attempts) throw InvalidInput("occupancy sampling kept landing in terminal states");
        const OccupancySample sample = sample_occupancy(model, policy, task, rollout, rng);
        if (!sample.terminated) states.push_back(sample.state);
    }
    return states;
}

} // namespace

TrainingResult train_moma(const MomaProblem& problem, const MomaSettings& settings) {
    settings.validate();
    if (!problem.mle || !problem.dataset) throw InvalidInput("train_moma: problem needs an MLE and a dataset");
    const std::size_t m = problem.task.num_actions;
    if (m != problem.mle->num_actions()) throw InvalidInput("train_moma: action count mismatch");

    const double eta = settings.effective_eta(m);
    const NegativeEntropy entropy;
    const RolloutConfig rollout{settings.gamma, settings.horizon_cap, settings.mc_number};
    const RolloutConfig probe_rollout{settings.gamma, settings.horizon_cap, settings.probe_rollouts};
    const auto spec = ConfidenceSetSpec::from_reference(problem.dataset, *problem.mle, settings.alpha_c);
    const auto uniform_features = std::holds_alternative<LinearFamilyConfig>(settings.family)
                                      ? std::get<LinearFamilyConfig>(settings.family).features
                                      : RbfFeatures::default_grid();

    TrainingResult result;
    result.eta = eta;
    auto policy = std::make_shared<const SoftmaxFunctionalPolicy>(SoftmaxFunctionalPolicy::uniform(m, uniform_features, eta));
    result.iterates.push_back(policy);
    result.last_model = problem.mle;
    const auto start = std::chrono::steady_clock::now();

    for (int t = 0; t < settings.iterations; ++t) {
        const auto ut = static_cast<std::uint64_t>(t);
        const char* stage = "conservative-eval";
        try {
            Rng model_rng = make_stream(settings.seed, {ut, 0});
            ConservativeResult conservative =
                conservative_model(problem.mle, *policy, problem.task, spec, settings.pd, settings.gamma, model_rng);
            const TransitionModel& model = *conservative.model;

            stage = "state-sampling";
            Rng state_rng = make_stream(settings.seed, {ut, 1});
            const auto states =
                sample_policy_states(model, *policy, problem.task, rollout, settings.actor_steps, state_rng);

            stage = "augmented-q";
            std::vector<std::vector<AugmentedQSample>> targets(m);
            for (std::size_t j = 0; j < states.size(); ++j) {
                const auto offset = augmented_q_offset(entropy, policy->action_distribution(states[j]), eta);
                for (std::size_t i = 0; i < m; ++i) {
                    Rng q_rng = make_stream(settings.seed, {ut, 2, j, i});
                    const MeanEstimate q = mc_q_average(model, *policy, problem.task, states[j], i, rollout, q_rng);
                    targets[i].push_back({states[j], i, q.mean + offset[i]});
                }
            }

            stage = "fit";
            std::vector<std::shared_ptr<const FunctionApproximator>> fs;
            for (std::size_t i = 0; i < m; ++i) {
                FamilyConfig family = settings.family;
                if (auto* ff = std::get_if<FeedforwardFamilyConfig>(&family)) ff->seed = derive_seed(settings.seed, {ut, 4, i});
                fs.push_back(fit_approximator(targets[i], family).approximator);
            }
            policy = std::make_shared<const SoftmaxFunctionalPolicy>(std::move(fs), eta);
            result.iterates.push_back(policy);

            stage = "trace";
            Rng trace_rng = make_stream(settings.seed, {ut, 3});
            const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            for (double probe : settings.probe_states) {
                TraceRecord record;
                record.t = t + 1;
                record.probe_state = probe;
                const StateVector s(probe);
                record.value_true = problem.true_model
                                        ? mc_value_average(*problem.true_model, *policy, problem.task, s, probe_rollout,
                                                           trace_rng).mean
                                        : std::numeric_limits<double>::quiet_NaN();
                record.value_model = mc_value_average(model, *policy, problem.task, s, probe_rollout, trace_rng).mean;
                const auto w = policy->action_distribution(s);
                record.weights.assign(w.weights().begin(), w.weights().end());
                record.model_parameters = describe_model(model);
                record.lambda = conservative.lambda;
                record.wall_seconds = elapsed;
                result.trace.records.push_back(std::move(record));
            }
            result.last_model = conservative.model;
            result.pd_log.push_back(std::move(conservative.diagnostics));
        } catch (const std::exception& e) {
            throw TrainingError("iteration " + std::to_string(t + 1) + ", stage " + stage + ": " + e.what());
        }
        spdlog::debug("iteration {} done", t + 1);
    }
    result.final_policy = policy;
    return result;
}

TrainingResult train_npg(const MomaProblem& problem, MomaSettings settings) {
    settings.pd.steps = 0;
    return train_moma(problem, settings);
}

std::shared_ptr<const GreedyQPolicy> train_nfq(const OfflineDataset& dataset, const NfqSettings& settings) {
    if (settings.iterations < 1) throw InvalidInput("train_nfq: iterations must be positive");
    (void)DiscountConfig(settings.gamma);
    const std::size_t m = dataset.num_actions();

    std::vector<std::vector<std::size_t>> by_action(m);
    for (std::size_t k = 0; k < dataset.size(); ++k) by_action[dataset[k].action].push_back(k);

    // Heads without data keep the most pessimistic value the rewards allow.
    double min_reward = 0.0;
    for (const auto& tr : dataset.transitions()) min_reward = std::min(min_reward, tr.reward);
    const auto bias_only = std::make_shared<const RbfFeatures>(std::vector<double>{}, 1.0, true);
    const auto floor_value = std::make_shared<const LinearApproximator>(
        bias_only, Eigen::VectorXd::Constant(1, min_reward / (1.0 - settings.gamma)));

    std::vector<std::shared_ptr<const FunctionApproximator>> heads(m, floor_value);
    std::vector<std::shared_ptr<const FeedforwardApproximator>> nets(m);
    for (int it = 0; it < settings.iterations; ++it) {
        std::vector<std::vector<AugmentedQSample>> samples(m);
        for (std::size_t a = 0; a < m; ++a) {
            for (std::size_t k : by_action[a]) {
                const auto& tr = dataset[k];
                double y = tr.reward;
                if (!tr.terminal && it > 0) {
                    double best = -std::numeric_limits<double>::infinity();
                    for (const auto& h : heads) best = std::max(best, h->evaluate(tr.next_state));
                    y += settings.gamma * best;
                }
                samples[a].push_back({tr.state, a, y});
            }
        }
        std::vector<std::shared_ptr<const FunctionApproximator>> next_heads = heads;
        for (std::size_t a = 0; a < m; ++a) {
            if (samples[a].empty()) continue;
            FeedforwardFamilyConfig net = settings.network;
            net.seed = derive_seed(settings.seed, {static_cast<std::uint64_t>(a)});
            const auto fit = fit_feedforward(samples[a], net, nets[a].get());
            nets[a] = std::static_pointer_cast<const FeedforwardApproximator>(fit.approximator);
            next_heads[a] = nets[a];
        }
        heads = std::move(next_heads);
    }
    return std::make_shared<const GreedyQPolicy>(std::move(heads));
}

} // namespace moma
