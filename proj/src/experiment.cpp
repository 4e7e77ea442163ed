#include "moma/experiment.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace moma {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& value) {
    double out = 0.0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
        throw ConfigError("config: '" + key + "' expects a real number, got '" + value + "'");
    }
    return out;
}

template <typename Int>
Int parse_integer(const std::string& key, const std::string& value) {
    Int out = 0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("config: '" + key + "' expects an integer, got '" + value + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("config: '" + key + "' expects true/false, got '" + value + "'");
}

constexpr std::uint64_t kEvaluationTag = 0x65'76'61'6c; // "eval"

} // namespace

Algorithm parse_algorithm(const std::string& name) {
    if (name == "moma") return Algorithm::moma;
    if (name == "npg") return Algorithm::npg;
    if (name == "nfq") return Algorithm::nfq;
    if (name == "uniform") return Algorithm::uniform;
    throw ConfigError("unknown algorithm '" + name + "' (expected moma, npg, nfq or uniform)");
}

std::string to_string(Algorithm algorithm) {
    switch (algorithm) {
    case Algorithm::moma: return "moma";
    case Algorithm::npg: return "npg";
    case Algorithm::nfq: return "nfq";
    case Algorithm::uniform: return "uniform";
    }
    return "unknown";
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    auto integer = [&](int& field) { field = parse_integer<int>(key, value); };
    auto real = [&](double& field) { field = parse_real(key, value); };
    if (key == "env") env = value;
    else if (key == "component_variance") real(component_variance);
    else if (key == "max_episode_length") integer(max_episode_length);
    else if (key == "dataset_path") dataset_path = value;
    else if (key == "dataset_episodes") integer(dataset_episodes);
    else if (key == "dataset_seed") dataset_seed = parse_integer<std::uint64_t>(key, value);
    else if (key == "algorithm") algorithm = parse_algorithm(value);
    else if (key == "iterations") integer(iterations);
    else if (key == "actor_steps") integer(actor_steps);
    else if (key == "model_steps") integer(model_steps);
    else if (key == "eta") real(eta);
    else if (key == "theory_eta") theory_eta = parse_bool(key, value);
    else if (key == "kappa1") real(kappa1);
    else if (key == "kappa2") real(kappa2);
    else if (key == "lambda") real(lambda);
    else if (key == "lambda_min") real(lambda_min);
    else if (key == "lambda_max") real(lambda_max);
    else if (key == "gamma") real(gamma);
    else if (key == "mc_number") integer(mc_number);
    else if (key == "horizon_cap") integer(horizon_cap);
    else if (key == "alpha_c") real(alpha_c);
    else if (key == "approximator") approximator = value;
    else if (key == "hidden_units") integer(hidden_units);
    else if (key == "nfq_iterations") integer(nfq_iterations);
    else if (key == "nfq_epochs") integer(nfq_epochs);
    else if (key == "nfq_hidden") integer(nfq_hidden);
    else if (key == "nfq_learning_rate") real(nfq_learning_rate);
    else if (key == "eval_episodes") integer(eval_episodes);
    else if (key == "mixture_policy") mixture_policy = parse_bool(key, value);
    else if (key == "probe_state") real(probe_state);
    else if (key == "probe_rollouts") integer(probe_rollouts);
    else if (key == "trace_pd") trace_pd = parse_bool(key, value);
    else if (key == "seed") seed = parse_integer<std::uint64_t>(key, value);
    else if (key == "output_dir") output_dir = value;
    else throw ConfigError("config: unknown key '" + key + "'");
}

void ExperimentConfig::validate() const {
    if (env != "random_walk") throw ConfigError("config: unsupported env '" + env + "'");
    if (!(component_variance > 0.0)) throw ConfigError("config: component_variance must be positive");
    if (max_episode_length < 1 || dataset_episodes < 1 || eval_episodes < 1) {
        throw ConfigError("config: episode counts must be positive");
    }
    if (approximator != "linear" && approximator != "feedforward") {
        throw ConfigError("config: approximator must be linear or feedforward");
    }
    if (nfq_iterations < 1 || nfq_epochs < 0 || nfq_hidden < 1 || hidden_units < 1 || !(nfq_learning_rate > 0.0)) {
        throw ConfigError("config: invalid NFQ or network settings");
    }
    try {
        moma_settings().validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

MomaSettings ExperimentConfig::moma_settings() const {
    MomaSettings s;
    s.iterations = iterations;
    s.actor_steps = actor_steps;
    s.eta = eta;
    s.theory_eta = theory_eta;
    s.pd.kappa1 = kappa1;
    s.pd.kappa2 = kappa2;
    s.pd.lambda_init = lambda;
    s.pd.lambda_min = lambda_min;
    s.pd.lambda_max = lambda_max;
    s.pd.steps = model_steps;
    s.pd.rollout_count = mc_number;
    s.pd.rollout_horizon_cap = horizon_cap;
    s.gamma = gamma;
    s.mc_number = mc_number;
    s.horizon_cap = horizon_cap;
    s.alpha_c = alpha_c;
    if (approximator == "feedforward") {
        FeedforwardFamilyConfig ff;
        ff.hidden = static_cast<std::size_t>(hidden_units);
        s.family = ff;
    }
    s.probe_states = {probe_state};
    s.probe_rollouts = probe_rollouts;
    s.seed = seed;
    return s;
}

NfqSettings ExperimentConfig::nfq_settings() const {
    NfqSettings s;
    s.iterations = nfq_iterations;
    s.gamma = gamma;
    s.network.hidden = static_cast<std::size_t>(nfq_hidden);
    s.network.max_epochs = nfq_epochs;
    s.network.learning_rate = nfq_learning_rate;
    s.seed = seed;
    return s;
}

ExperimentConfig load_config(std::istream& in, ExperimentConfig base) {
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
        base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path.string());
    return load_config(in, std::move(base));
}

RandomWalkEnv make_env(const ExperimentConfig& config) {
    return RandomWalkEnv(config.component_variance, {0.6, 0.6, 0.4}, config.max_episode_length);
}

OfflineDataset obtain_dataset(const ExperimentConfig& config, const RandomWalkEnv& env) {
    if (!config.dataset_path.empty()) {
        std::ifstream in(config.dataset_path);
        if (!in) throw ConfigError("dataset file not found: " + config.dataset_path);
        try {
            return read_dataset_csv(in);
        } catch (const InvalidInput& e) {
            throw ConfigError("dataset file " + config.dataset_path + ": " + e.what());
        }
    }
    const FixedPolicy behavior = behavior_policy();
    return generate_offline_dataset(env, behavior, config.dataset_episodes, config.effective_dataset_seed(), config.gamma);
}

std::shared_ptr<const MixtureWalkModel> fit_mle(const OfflineDataset& dataset, const RandomWalkEnv& env) {
    auto fit = em_fit(dataset, env.family());
    for (std::size_t a = 0; a < fit.unfitted.size(); ++a) {
        if (fit.unfitted[a]) spdlog::warn("no transitions for action {}; its mixture weight keeps the EM start", a);
    }
    return std::make_shared<const MixtureWalkModel>(std::move(fit.model));
}

AlgorithmRun run_algorithm(const ExperimentConfig& config, const OfflineDataset& dataset, const RandomWalkEnv& env) {
    AlgorithmRun run;
    run.mle = fit_mle(dataset, env);
    run.model = run.mle;
    switch (config.algorithm) {
    case Algorithm::uniform:
        run.members.push_back(std::make_shared<const FixedPolicy>(SimplexVector::uniform(env.family().num_actions())));
        return run;
    case Algorithm::nfq:
        run.members.push_back(train_nfq(dataset, config.nfq_settings()));
        return run;
    case Algorithm::moma:
    case Algorithm::npg: {
        MomaProblem problem{env.task(), run.mle, std::make_shared<const OfflineDataset>(dataset), env.true_model()};
        const MomaSettings settings = config.moma_settings();
        TrainingResult result =
            config.algorithm == Algorithm::moma ? train_moma(problem, settings) : train_npg(problem, settings);
        if (config.mixture_policy && result.iterates.size() > 1) {
            // pi_0 .. pi_{T-1}
            for (std::size_t i = 0; i + 1 < result.iterates.size(); ++i) run.members.push_back(result.iterates[i]);
        } else {
            run.members.push_back(result.final_policy);
        }
        if (auto mixture = std::dynamic_pointer_cast<const MixtureWalkModel>(result.last_model)) run.model = mixture;
        run.trace = std::move(result.trace);
        run.pd_log = std::move(result.pd_log);
        return run;
    }
    }
    throw InvalidInput("run_algorithm: unknown algorithm");
}

EvaluationReport evaluate_members(const RandomWalkEnv& env, std::span<const std::shared_ptr<const Policy>> members,
                                  int episodes, std::uint64_t seed) {
    if (members.size() == 1) return evaluate_policy(env, *members.front(), episodes, seed);
    return evaluate_mixture(env, members, episodes, seed);
}

std::uint64_t evaluation_seed(const ExperimentConfig& config) { return derive_seed(config.seed, {kEvaluationTag}); }

// ---------------------------------------------------------------------------

void write_trace_csv(const TrainingTrace& trace, std::ostream& out) {
    std::size_t actions = 0;
    std::size_t params = 0;
    for (const auto& r : trace.records) {
        actions = std::max(actions, r.weights.size());
        params = std::max(params, r.model_parameters.size());
    }
    out << "t,probe,value_true,value_model";
    for (std::size_t a = 0; a < actions; ++a) out << ",weight_" << a;
    for (std::size_t k = 0; k < params; ++k) out << ",model_" << k;
    out << ",lambda,wall_seconds\n";
    for (const auto& r : trace.records) {
        out << r.t << ',' << format_real(r.probe_state) << ',' << format_real(r.value_true) << ','
            << format_real(r.value_model);
        for (std::size_t a = 0; a < actions; ++a) out << ',' << (a < r.weights.size() ? format_real(r.weights[a]) : "");
        for (std::size_t k = 0; k < params; ++k) {
            out << ',' << (k < r.model_parameters.size() ? format_real(r.model_parameters[k]) : "");
        }
        out << ',' << format_real(r.lambda) << ',' << format_real(r.wall_seconds) << '\n';
    }
}

TrainingTrace read_trace_csv(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw InvalidInput("trace CSV: missing header");
    std::vector<std::string> columns;
    {
        std::stringstream ss(trim(header));
        std::string c;
        while (std::getline(ss, c, ',')) columns.push_back(c);
    }
    if (columns.size() < 6 || columns[0] != "t") throw InvalidInput("trace CSV: unexpected header");
    TrainingTrace trace;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (fields.size() < columns.size()) fields.resize(columns.size());
        if (fields.size() != columns.size()) throw InvalidInput("trace CSV: field count mismatch");
        TraceRecord r;
        for (std::size_t c = 0; c < columns.size(); ++c) {
            const auto& name = columns[c];
            if (fields[c].empty()) continue;
            const double v = std::stod(fields[c]);
            if (name == "t") r.t = static_cast<int>(v);
            else if (name == "probe") r.probe_state = v;
            else if (name == "value_true") r.value_true = v;
            else if (name == "value_model") r.value_model = v;
            else if (name.rfind("weight_", 0) == 0) r.weights.push_back(v);
            else if (name.rfind("model_", 0) == 0) r.model_parameters.push_back(v);
            else if (name == "lambda") r.lambda = v;
            else if (name == "wall_seconds") r.wall_seconds = v;
        }
        trace.records.push_back(std::move(r));
    }
    return trace;
}

void write_pd_log_csv(const std::vector<std::vector<PdDiagnostics>>& log, std::ostream& out) {
    out << "t,k,value,gap,lambda,gradient_norm\n";
    for (std::size_t t = 0; t < log.size(); ++t) {
        for (const auto& d : log[t]) {
            out << t + 1 << ',' << d.k << ',' << format_real(d.value) << ',' << format_real(d.gap) << ','
                << format_real(d.lambda) << ',' << format_real(d.gradient_norm) << '\n';
        }
    }
}

void export_figure_data(const TrainingTrace& trace, double probe_state, const std::filesystem::path& dir) {
    const auto records = trace.at_probe(probe_state);
    if (records.empty()) throw InvalidInput("export_figure_data: no trace records at probe state " + format_real(probe_state));
    std::filesystem::create_directories(dir);
    auto series = [&](const char* file, const char* column, auto&& value) {
        std::ofstream out(dir / file);
        if (!out) throw std::runtime_error(std::string("cannot write ") + (dir / file).string());
        out << "iteration," << column << '\n';
        for (const auto& r : records) out << r.t << ',' << format_real(value(r)) << '\n';
    };
    auto component = [](const std::vector<double>& v, std::size_t i) {
        return i < v.size() ? v[i] : std::numeric_limits<double>::quiet_NaN();
    };
    series("fig_value.csv", "value", [](const TraceRecord& r) { return r.value_true; });
    series("fig_left_weight.csv", "left_weight", [&](const TraceRecord& r) { return component(r.weights, kLeft); });
    series("fig_stay_weight.csv", "stay_weight", [&](const TraceRecord& r) { return component(r.weights, kStay); });
    series("fig_psi_stay.csv", "psi_stay", [&](const TraceRecord& r) { return component(r.model_parameters, kStay); });
}

// ---------------------------------------------------------------------------

int run_pipeline(const ExperimentConfig& config) {
    const char* stage = "configure";
    try {
        config.validate();
        const RandomWalkEnv env = make_env(config);
        stage = "generate";
        const OfflineDataset dataset = obtain_dataset(config, env);
        spdlog::info("dataset: {} transitions", dataset.size());

        stage = "train";
        const AlgorithmRun run = run_algorithm(config, dataset, env);

        stage = "evaluate";
        const EvaluationReport report =
            evaluate_members(env, run.members, config.eval_episodes, evaluation_seed(config));
        spdlog::info("{}: mean episode length {:.3f} (std {:.3f}, {} episodes)", to_string(config.algorithm),
                     report.mean, report.std, report.episodes);

        stage = "export";
        const std::filesystem::path dir(config.output_dir);
        std::filesystem::create_directories(dir);
        auto open = [&](const char* name) {
            std::ofstream out(dir / name);
            if (!out) throw std::runtime_error(std::string("cannot write ") + (dir / name).string());
            return out;
        };
        {
            auto out = open("dataset.csv");
            write_dataset_csv(dataset, out);
        }
        {
            auto out = open("report.json");
            out << report.to_json().dump(2) << '\n';
        }
        {
            auto out = open("policy.ckpt");
            write_policy_checkpoint(out, run.members);
        }
        {
            auto out = open("model.ckpt");
            write_model_checkpoint(*run.model, out);
        }
        if (!run.trace.records.empty()) {
            auto out = open("trace.csv");
            write_trace_csv(run.trace, out);
            export_figure_data(run.trace, config.probe_state, dir);
        }
        if (config.trace_pd && !run.pd_log.empty()) {
            auto out = open("pd_log.csv");
            write_pd_log_csv(run.pd_log, out);
        }
        return 0;
    } catch (const ConfigError& e) {
        spdlog::error("[{}] configuration error: {}", stage, e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("[{}] {}", stage, e.what());
        return 1;
    }
}

} // namespace moma
