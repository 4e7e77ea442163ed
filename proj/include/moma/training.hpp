#pragma once

#include "moma/approximator.hpp"
#include "moma/conservative.hpp"

#include <memory>
#include <stdexcept>
#include <vector>

namespace moma {

/// Raised by the training loops with the iteration index and stage prefixed to the cause.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MomaSettings {
    int iterations = 40;
    /// N, the number of states sampled per policy-improvement fit.
    int actor_steps = 150;
    double eta = 0.1;
    /// Replace eta by (1 - gamma) sqrt(2 log|A| / T).
    bool theory_eta = false;
    PrimalDualConfig pd;
    double gamma = 0.4;
    /// Rollouts averaged per augmented-Q target.
    int mc_number = 300;
    int horizon_cap = 200;
    double alpha_c = 4.0;
    FamilyConfig family = LinearFamilyConfig{};
    std::vector<double> probe_states = {0.1};
    /// Rollouts per probe-state value in the trace.
    int probe_rollouts = 1000;
    std::uint64_t seed = 0;

    void validate() const;
    double effective_eta(std::size_t num_actions) const;
};

struct MomaProblem {
    TaskSpec task;
    std::shared_ptr<const TransitionModel> mle;
    std::shared_ptr<const OfflineDataset> dataset;
    /// Optional; when set the trace also records probe values under these dynamics.
    std::shared_ptr<const TransitionModel> true_model;
};

struct TraceRecord {
    int t = 0;
    double probe_state = 0.0;
    /// NaN when the problem has no true model.
    double value_true = 0.0;
    double value_model = 0.0;
    std::vector<double> weights;
    /// Parameters of the model used in this iteration (mixture weights for mixture models).
    std::vector<double> model_parameters;
    double lambda = 0.0;
    double wall_seconds = 0.0;
};

/// One record per (completed iteration, probe state); t counts from 1.
struct TrainingTrace {
    std::vector<TraceRecord> records;

    std::size_t iterations() const;
    std::vector<TraceRecord> at_probe(double probe_state) const;
};

struct TrainingResult {
    std::shared_ptr<const SoftmaxFunctionalPolicy> final_policy;
    /// pi_0 (uniform) through pi_T.
    std::vector<std::shared_ptr<const SoftmaxFunctionalPolicy>> iterates;
    TrainingTrace trace;
    std::shared_ptr<const TransitionModel> last_model;
    std::vector<std::vector<PdDiagnostics>> pd_log;
    double eta = 0.0;
};

/// Alternates K primal-dual model steps with one mirror-ascent policy step, T times.
/// Bit-reproducible: every stage of iteration t draws from its own stream of settings.seed.
TrainingResult train_moma(const MomaProblem& problem, const MomaSettings& settings);

/// train_moma with no conservative model steps: the policy is improved against the MLE.
TrainingResult train_npg(const MomaProblem& problem, MomaSettings settings);

/// Mixture-weight parameters for trace output: psi for mixture models, raw parameters otherwise.
std::vector<double> describe_model(const TransitionModel& model);

struct NfqSettings {
    int iterations = 20;
    double gamma = 0.4;
    FeedforwardFamilyConfig network{};
    std::uint64_t seed = 0;
};

/// Fitted Q-iteration with one feedforward head per action, warm-started between iterations.
std::shared_ptr<const GreedyQPolicy> train_nfq(const OfflineDataset& dataset, const NfqSettings& settings);

} // namespace moma
