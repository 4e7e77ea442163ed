#include "moma/experiment.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace moma;
namespace fs = std::filesystem;

namespace {

struct ScratchDir {
    fs::path path;
    explicit ScratchDir(const std::string& name) : path(fs::temp_directory_path() / ("moma_test_" + name)) {
        fs::remove_all(path);
    }
    ~ScratchDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_lines(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) n += line.empty() ? 0 : 1;
    return n;
}

ExperimentConfig quick_moma(const fs::path& out) {
    ExperimentConfig c;
    c.iterations = 1;
    c.actor_steps = 20;
    c.model_steps = 3;
    c.mc_number = 20;
    c.probe_rollouts = 50;
    c.eval_episodes = 100;
    c.dataset_seed = 28;
    c.output_dir = out.string();
    return c;
}

} // namespace

TEST_CASE("config parsing") {
    std::stringstream text(
        "# comment line\n"
        "algorithm = npg\n"
        "iterations = 12   # trailing comment\n"
        "eta=0.25\n"
        "\n"
        "dataset_seed = 48\n"
        "mixture_policy = true\n"
        "approximator = feedforward\n");
    const auto c = load_config(text);
    CHECK(c.algorithm == Algorithm::npg);
    CHECK(c.iterations == 12);
    CHECK(c.eta == 0.25);
    CHECK(c.effective_dataset_seed() == 48);
    CHECK(c.mixture_policy);
    CHECK(std::holds_alternative<FeedforwardFamilyConfig>(c.moma_settings().family));
    CHECK(c.moma_settings().pd.steps == 150);

    ExperimentConfig d;
    CHECK_THROWS_AS(d.set("no_such_key", "1"), ConfigError);
    CHECK_THROWS_AS(d.set("iterations", "many"), ConfigError);
    CHECK_THROWS_AS(d.set("algorithm", "sarsa"), ConfigError);
    d.gamma = 1.0;
    CHECK_THROWS_AS(d.validate(), ConfigError);
    std::stringstream broken("iterations 12\n");
    CHECK_THROWS_AS(load_config(broken), ConfigError);
    CHECK(parse_algorithm("moma") == Algorithm::moma);
    CHECK(to_string(Algorithm::nfq) == "nfq");
    CHECK(ExperimentConfig{}.effective_dataset_seed() == 0);
}

TEST_CASE("uniform pipeline") {
    spdlog::set_level(spdlog::level::warn);
    ScratchDir dir("uniform");
    ExperimentConfig c;
    c.algorithm = Algorithm::uniform;
    c.output_dir = dir.path.string();
    REQUIRE(run_pipeline(c) == 0);
    const auto report = EvaluationReport::from_json(nlohmann::json::parse(slurp(dir.path / "report.json")));
    MESSAGE("uniform mean " << report.mean);
    CHECK(report.episodes == 1000);
    CHECK(report.mean >= 5.0);
    CHECK(report.mean <= 7.5);
    CHECK(fs::exists(dir.path / "policy.ckpt"));
    CHECK(fs::exists(dir.path / "model.ckpt"));
    CHECK(fs::exists(dir.path / "dataset.csv"));
    CHECK_FALSE(fs::exists(dir.path / "trace.csv"));
}

TEST_CASE("missing dataset is a configuration error with no outputs") {
    spdlog::set_level(spdlog::level::off);
    ScratchDir dir("missing");
    ExperimentConfig c;
    c.dataset_path = (dir.path / "absent.csv").string();
    c.output_dir = (dir.path / "out").string();
    CHECK(run_pipeline(c) == 2);
    CHECK_FALSE(fs::exists(dir.path / "out"));
    spdlog::set_level(spdlog::level::warn);
}

TEST_CASE("pipeline reruns are byte-identical and checkpoints reload") {
    spdlog::set_level(spdlog::level::warn);
    ScratchDir a("rerun_a"), b("rerun_b");
    REQUIRE(run_pipeline(quick_moma(a.path)) == 0);
    REQUIRE(run_pipeline(quick_moma(b.path)) == 0);
    CHECK(slurp(a.path / "report.json") == slurp(b.path / "report.json"));
    CHECK(slurp(a.path / "policy.ckpt") == slurp(b.path / "policy.ckpt"));
    CHECK(slurp(a.path / "model.ckpt") == slurp(b.path / "model.ckpt"));

    // Single-iteration trace: a header plus one row per figure series.
    for (const char* name : {"fig_value.csv", "fig_left_weight.csv", "fig_stay_weight.csv", "fig_psi_stay.csv"}) {
        REQUIRE(fs::exists(a.path / name));
        CHECK(count_lines(a.path / name) == 2);
    }
    std::ifstream trace_in(a.path / "trace.csv");
    const auto trace = read_trace_csv(trace_in);
    CHECK(trace.iterations() == 1);

    // Retrain in memory and compare against the reloaded checkpoint.
    const auto config = quick_moma(a.path);
    const auto env = make_env(config);
    const auto run = run_algorithm(config, obtain_dataset(config, env), env);
    std::ifstream ckpt(a.path / "policy.ckpt");
    const auto loaded = read_policy_checkpoint(ckpt);
    REQUIRE(loaded.members.size() == run.members.size());
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const StateVector s(-3.0 + 6.0 * k / 99.0);
        const auto x = run.members[0]->action_distribution(s), y = loaded.members[0]->action_distribution(s);
        for (std::size_t i = 0; i < 3; ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
    }
    CHECK(worst < 1e-12);

    std::ifstream model_in(a.path / "model.ckpt");
    CHECK(read_model_checkpoint(model_in).psi() == run.model->psi());
}

TEST_CASE("trace CSV round trip and figure export") {
    TrainingTrace trace;
    for (int t = 1; t <= 3; ++t) {
        trace.records.push_back({t, 0.1, -2.5 + 0.1 * t, -2.4, {0.2, 0.3, 0.5}, {0.6, 0.5 + 0.01 * t, 0.4}, 3.0, 0.01 * t});
    }
    std::stringstream io;
    write_trace_csv(trace, io);
    const auto back = read_trace_csv(io);
    REQUIRE(back.records.size() == 3);
    CHECK(back.records[2].value_true == trace.records[2].value_true);
    CHECK(back.records[1].weights == trace.records[1].weights);
    CHECK(back.records[0].model_parameters == trace.records[0].model_parameters);

    ScratchDir dir("figures");
    export_figure_data(trace, 0.1, dir.path);
    CHECK(count_lines(dir.path / "fig_stay_weight.csv") == 4);
    std::ifstream in(dir.path / "fig_psi_stay.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(row.find("0.51") != std::string::npos);
}

TEST_CASE("mixture policy uses the iterates before the last") {
    spdlog::set_level(spdlog::level::warn);
    ScratchDir dir("mixture");
    auto c = quick_moma(dir.path);
    c.iterations = 2;
    c.mixture_policy = true;
    const auto env = make_env(c);
    const auto run = run_algorithm(c, obtain_dataset(c, env), env);
    CHECK(run.members.size() == 2);
    const auto p = run.members[0]->action_distribution(StateVector(0.3));
    CHECK(p[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}
