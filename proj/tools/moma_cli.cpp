// Command-line front end: generate-data, train, evaluate, pipeline, export-figures.

#include "moma/experiment.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string algo;
    std::string out;
    bool deterministic = false;
    std::vector<std::string> overrides;
    bool verbose = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "flat key = value config file");
    cmd->add_option("--seed", flags.seed, "experiment seed");
    cmd->add_option("--algo", flags.algo, "moma, npg, nfq or uniform");
    cmd->add_option("--out", flags.out, "output directory");
    cmd->add_flag("--deterministic", flags.deterministic, "single-threaded, bit-reproducible execution");
    cmd->add_option("--set", flags.overrides, "override a config key, as key=value");
    cmd->add_flag("-v,--verbose", flags.verbose, "debug logging");
}

moma::ExperimentConfig resolve(const CommonFlags& flags) {
    moma::ExperimentConfig config;
    if (!flags.config_path.empty()) config = moma::load_config_file(flags.config_path);
    for (const auto& kv : flags.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw moma::ConfigError("--set expects key=value, got '" + kv + "'");
        config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (flags.seed) config.seed = *flags.seed;
    if (!flags.algo.empty()) config.algorithm = moma::parse_algorithm(flags.algo);
    if (!flags.out.empty()) config.output_dir = flags.out;
    config.validate();
    return config;
}

std::ofstream open_output(const fs::path& dir, const char* name) {
    fs::create_directories(dir);
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
}

int generate_data(const moma::ExperimentConfig& config) {
    const auto env = moma::make_env(config);
    const auto dataset = moma::obtain_dataset(config, env);
    auto out = open_output(config.output_dir, "dataset.csv");
    moma::write_dataset_csv(dataset, out);
    spdlog::info("wrote {} transitions to {}", dataset.size(), (fs::path(config.output_dir) / "dataset.csv").string());
    return 0;
}

int train(const moma::ExperimentConfig& config) {
    const auto env = moma::make_env(config);
    const auto dataset = moma::obtain_dataset(config, env);
    const auto run = moma::run_algorithm(config, dataset, env);
    const fs::path dir(config.output_dir);
    {
        auto out = open_output(dir, "policy.ckpt");
        moma::write_policy_checkpoint(out, run.members);
    }
    {
        auto out = open_output(dir, "model.ckpt");
        moma::write_model_checkpoint(*run.model, out);
    }
    if (!run.trace.records.empty()) {
        auto out = open_output(dir, "trace.csv");
        moma::write_trace_csv(run.trace, out);
    }
    if (config.trace_pd && !run.pd_log.empty()) {
        auto out = open_output(dir, "pd_log.csv");
        moma::write_pd_log_csv(run.pd_log, out);
    }
    spdlog::info("trained {}; outputs in {}", moma::to_string(config.algorithm), dir.string());
    return 0;
}

int evaluate(const moma::ExperimentConfig& config, const std::string& policy_path) {
    const fs::path path = policy_path.empty() ? fs::path(config.output_dir) / "policy.ckpt" : fs::path(policy_path);
    std::ifstream in(path);
    if (!in) throw moma::ConfigError("policy checkpoint not found: " + path.string());
    const auto checkpoint = moma::read_policy_checkpoint(in);
    const auto env = moma::make_env(config);
    const auto report =
        moma::evaluate_members(env, checkpoint.members, config.eval_episodes, moma::evaluation_seed(config));
    auto out = open_output(config.output_dir, "report.json");
    out << report.to_json().dump(2) << '\n';
    std::cout << "mean episode length " << report.mean << " (std " << report.std << ", " << report.episodes
              << " episodes)\n";
    return 0;
}

int export_figures(const moma::ExperimentConfig& config) {
    const fs::path dir(config.output_dir);
    std::ifstream in(dir / "trace.csv");
    if (!in) throw moma::ConfigError("trace not found: " + (dir / "trace.csv").string());
    const auto trace = moma::read_trace_csv(in);
    moma::export_figure_data(trace, config.probe_state, dir);
    spdlog::info("figure series written to {}", dir.string());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pessimistic model-based offline RL on the random-walk benchmark"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string policy_path;
    auto* gen = app.add_subcommand("generate-data", "generate the offline dataset");
    auto* tr = app.add_subcommand("train", "train a policy");
    auto* ev = app.add_subcommand("evaluate", "evaluate a policy checkpoint online");
    auto* pipe = app.add_subcommand("pipeline", "generate, train, evaluate and export");
    auto* fig = app.add_subcommand("export-figures", "write figure series from trace.csv");
    for (auto* cmd : {gen, tr, ev, pipe, fig}) add_common(cmd, flags);
    ev->add_option("--policy", policy_path, "policy checkpoint (default <out>/policy.ckpt)");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(flags.verbose ? spdlog::level::debug : spdlog::level::info);

    const char* stage = "configure";
    try {
        const auto config = resolve(flags);
        if (pipe->parsed()) return moma::run_pipeline(config);
        stage = app.get_subcommands().front()->get_name().c_str();
        if (gen->parsed()) return generate_data(config);
        if (tr->parsed()) return train(config);
        if (ev->parsed()) return evaluate(config, policy_path);
        return export_figures(config);
    } catch (const moma::ConfigError& e) {
        spdlog::error("[{}] configuration error: {}", stage, e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("[{}] {}", stage, e.what());
        return 1;
    }
}
