#pragma once

#include "moma/random_walk.hpp"
#include "moma/training.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace moma {

enum class Algorithm { moma, npg, nfq, uniform };

Algorithm parse_algorithm(const std::string& name);
std::string to_string(Algorithm algorithm);

/// Raised for invalid or incomplete experiment configuration (exit status 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Every knob of an experiment. Defaults reproduce the random-walk study.
struct ExperimentConfig {
    std::string env = "random_walk";
    double component_variance = 0.1;
    int max_episode_length = 50;

    /// Existing dataset CSV; when empty a dataset is generated.
    std::string dataset_path;
    int dataset_episodes = 50;
    /// Seed for dataset generation; defaults to `seed`.
    std::optional<std::uint64_t> dataset_seed;

    Algorithm algorithm = Algorithm::moma;
    int iterations = 40;
    int actor_steps = 150;
    int model_steps = 150;
    double eta = 0.1;
    bool theory_eta = false;
    double kappa1 = 0.1;
    double kappa2 = 0.0;
    double lambda = 3.0;
    double lambda_min = 0.0;
    double lambda_max = 100.0;
    double gamma = 0.4;
    int mc_number = 300;
    int horizon_cap = 200;
    double alpha_c = 4.0;
    std::string approximator = "linear";
    int hidden_units = 32;

    int nfq_iterations = 20;
    int nfq_epochs = 200;
    int nfq_hidden = 32;
    double nfq_learning_rate = 0.01;

    int eval_episodes = 1000;
    bool mixture_policy = false;
    double probe_state = 0.1;
    int probe_rollouts = 1000;
    bool trace_pd = false;

    std::uint64_t seed = 0;
    std::string output_dir = "out";

    /// Applies one `key = value` setting; throws ConfigError on unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    void validate() const;

    std::uint64_t effective_dataset_seed() const { return dataset_seed.value_or(seed); }
    MomaSettings moma_settings() const;
    NfqSettings nfq_settings() const;
};

/// Flat `key = value` lines, `#` comments; later keys override earlier ones.
ExperimentConfig load_config(std::istream& in, ExperimentConfig base = {});
ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base = {});

RandomWalkEnv make_env(const ExperimentConfig& config);

/// Loads the configured dataset or generates one. ConfigError if a path is given but missing.
OfflineDataset obtain_dataset(const ExperimentConfig& config, const RandomWalkEnv& env);

/// Fitted mixture model for a random-walk dataset.
std::shared_ptr<const MixtureWalkModel> fit_mle(const OfflineDataset& dataset, const RandomWalkEnv& env);

struct AlgorithmRun {
    /// Policies to evaluate: one, or the iterate mixture.
    std::vector<std::shared_ptr<const Policy>> members;
    std::shared_ptr<const MixtureWalkModel> mle;
    /// The last conservative model (MoMA), otherwise the MLE.
    std::shared_ptr<const MixtureWalkModel> model;
    TrainingTrace trace;
    std::vector<std::vector<PdDiagnostics>> pd_log;
};

AlgorithmRun run_algorithm(const ExperimentConfig& config, const OfflineDataset& dataset, const RandomWalkEnv& env);

EvaluationReport evaluate_members(const RandomWalkEnv& env, std::span<const std::shared_ptr<const Policy>> members,
                                  int episodes, std::uint64_t seed);

/// Seed of the online evaluation episodes derived from the experiment seed.
std::uint64_t evaluation_seed(const ExperimentConfig& config);

void write_trace_csv(const TrainingTrace& trace, std::ostream& out);
TrainingTrace read_trace_csv(std::istream& in);
void write_pd_log_csv(const std::vector<std::vector<PdDiagnostics>>& log, std::ostream& out);

/// Writes fig_value.csv, fig_left_weight.csv, fig_stay_weight.csv and fig_psi_stay.csv.
void export_figure_data(const TrainingTrace& trace, double probe_state, const std::filesystem::path& dir);

/// generate -> train -> evaluate -> export. Returns 0 on success, 2 on configuration errors
/// (nothing written), 1 on runtime failures; the failing stage is logged.
int run_pipeline(const ExperimentConfig& config);

} // namespace moma
