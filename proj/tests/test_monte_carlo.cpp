#include "moma/monte_carlo.hpp"
#include "moma/tabular.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace moma;

namespace {

TabularMDP constant_reward_loop() {
    std::vector<Eigen::MatrixXd> P{Eigen::MatrixXd::Ones(1, 1)};
    return TabularMDP(P, Eigen::MatrixXd::Ones(1, 1), 0.4, Eigen::VectorXd::Ones(1));
}

TabularMDP two_state_chain(double gamma) {
    std::vector<Eigen::MatrixXd> P{(Eigen::MatrixXd(2, 2) << 0.7, 0.3, 0.4, 0.6).finished(),
                                   (Eigen::MatrixXd(2, 2) << 0.1, 0.9, 0.5, 0.5).finished()};
    return TabularMDP(P, (Eigen::MatrixXd(2, 2) << 1, 0, -1, 2).finished(), gamma, Eigen::Vector2d(0.8, 0.2));
}

} // namespace

TEST_CASE("rollout config validation") {
    CHECK_THROWS_AS((RolloutConfig{1.0, 200, 300}.validate()), InvalidInput);
    CHECK_THROWS_AS((RolloutConfig{0.4, 0, 300}.validate()), InvalidInput);
    CHECK_NOTHROW((RolloutConfig{0.4, 200, 300}.validate()));
}

TEST_CASE("gamma = 0") {
    Rng rng(1);
    const auto mdp = random_tabular_mdp(4, 3, 0.0, rng);
    const TabularTransitionModel model(mdp);
    const TabularPolicy pi(random_policy_matrix(4, 3, rng));
    const auto task = tabular_task(mdp);
    const RolloutConfig cfg{0.0, 200, 1};
    std::vector<int> counts(4, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const auto sample = sample_occupancy(model, pi, task, cfg, rng);
        REQUIRE(sample.steps == 0);
        ++counts[state_index(sample.state)];
    }
    for (int s = 0; s < 4; ++s) CHECK(std::abs(counts[s] / double(n) - mdp.initial()[s]) < 0.01);
    for (std::size_t s = 0; s < 4; ++s) {
        for (std::size_t a = 0; a < 3; ++a) {
            const double q = mc_q_estimate(model, pi, task, StateVector(double(s)), a, cfg, rng);
            CHECK(q == mdp.rewards()(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)));
        }
    }
}

TEST_CASE("stopping time follows the geometric law") {
    const auto mdp = constant_reward_loop();
    const TabularTransitionModel model(mdp);
    const TabularPolicy pi(Eigen::MatrixXd::Ones(1, 1));
    const auto task = tabular_task(mdp);
    const double gamma = 0.4;
    const RolloutConfig cfg{gamma, 200, 1};
    Rng rng(2);
    const int n = 100000;
    std::vector<int> hist(5, 0);
    double total_steps = 0.0, total_q = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto sample = sample_occupancy(model, pi, task, cfg, rng);
        total_steps += sample.steps;
        if (sample.steps < 5) ++hist[static_cast<std::size_t>(sample.steps)];
        total_q += mc_q_estimate(model, pi, task, StateVector(0.0), 0, cfg, rng);
    }
    CHECK(std::abs(total_steps / n - gamma / (1 - gamma)) < 0.02 * gamma / (1 - gamma));
    for (int t = 0; t < 5; ++t) {
        const double p = (1 - gamma) * std::pow(gamma, t);
        CHECK(std::abs(hist[static_cast<std::size_t>(t)] / double(n) - p) <= 3.0 * std::sqrt(p * (1 - p) / n));
    }
    CHECK(std::abs(total_q / n - 5.0 / 3.0) < 0.02 * 5.0 / 3.0);
}

TEST_CASE("occupancy sampler matches the exact occupancy") {
    const auto mdp = two_state_chain(0.6);
    const TabularTransitionModel model(mdp);
    const PolicyMatrix matrix = (Eigen::MatrixXd(2, 2) << 0.3, 0.7, 0.8, 0.2).finished();
    const TabularPolicy pi(matrix);
    const auto exact = exact_occupancy(mdp, matrix);
    Rng rng(3);
    const int n = 100000;
    Eigen::MatrixXd empirical = Eigen::MatrixXd::Zero(2, 2);
    for (int i = 0; i < n; ++i) {
        const auto sample = sample_occupancy(model, pi, tabular_task(mdp), {0.6, 200, 1}, rng);
        empirical(static_cast<Eigen::Index>(state_index(sample.state)), static_cast<Eigen::Index>(sample.action)) += 1.0 / n;
    }
    const double tv_states = 0.5 * (empirical.rowwise().sum() - exact.rowwise().sum()).cwiseAbs().sum();
    const double tv_pairs = 0.5 * (empirical - exact).cwiseAbs().sum();
    CHECK(tv_states < 0.01);
    CHECK(tv_pairs < 0.01);
}

TEST_CASE("Q estimates are unbiased on a three-state instance") {
    const auto mdp = testing::load_shipped_mdp("chain3.txt");
    const TabularTransitionModel model(mdp);
    const auto task = tabular_task(mdp);
    Rng rng(4);
    const PolicyMatrix matrix = random_policy_matrix(3, 2, rng);
    const TabularPolicy pi(matrix);
    const Eigen::MatrixXd q = exact_q(mdp, matrix);
    const RolloutConfig cfg{mdp.gamma(), 200, 100000};
    for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t a = 0; a < 2; ++a) {
            const auto est = mc_q_average(model, pi, task, StateVector(double(s)), a, cfg, rng);
            const double truth = q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
            CHECK(std::abs(est.mean - truth) <= 3.0 * est.standard_error);
        }
    }
    const auto v = mc_value_average(model, pi, task, StateVector(1.0), cfg, rng);
    CHECK(std::abs(v.mean - exact_policy_value(mdp, matrix)[1]) <= 3.0 * v.standard_error);
}

TEST_CASE("terminal states end rollouts") {
    // State 1 is terminal; entering it pays r(0, a) and nothing afterwards.
    const auto mdp = two_state_chain(0.9);
    const TabularTransitionModel model(mdp);
    auto task = tabular_task(mdp);
    task.is_terminal = [](const StateVector& s) { return state_index(s) == 1; };
    const TabularPolicy pi((Eigen::MatrixXd(2, 2) << 1, 0, 1, 0).finished());
    Rng rng(5);
    CHECK(mc_value_estimate(model, pi, task, StateVector(1.0), {0.9, 200, 1}, rng) == 0.0);
    // Always action 0 from state 0: each visited step pays 1, continuing while staying (0.7) and not stopped (0.9).
    const auto est = mc_q_average(model, pi, task, StateVector(0.0), 0, {0.9, 1000, 100000}, rng);
    const double truth = 1.0 / (1.0 - 0.9 * 0.7);
    CHECK(std::abs(est.mean - truth) <= 3.0 * est.standard_error);

    RolloutCounters counters;
    const auto occ = sample_occupancy(model, pi, task, {0.999999, 1000, 1}, rng);
    CHECK(occ.terminated);
    CHECK(state_index(occ.state) == 1);
    const TabularTransitionModel loop(constant_reward_loop());
    const TabularPolicy single(Eigen::MatrixXd::Ones(1, 1));
    for (int i = 0; i < 200; ++i) {
        mc_q_estimate(loop, single, tabular_task(constant_reward_loop()), StateVector(0.0), 0, {0.9, 2, 1}, rng, &counters);
    }
    CHECK(counters.rollouts == 200);
    CHECK(counters.truncations > 100);
    CHECK(counters.truncations < 200);
}

TEST_CASE("augmented Q estimates") {
    Rng rng(6);
    const auto mdp = random_tabular_mdp(3, 3, 0.0, rng);
    const TabularTransitionModel model(mdp);
    const TabularPolicy uniform(Eigen::MatrixXd::Constant(3, 3, 1.0 / 3.0));
    const NegativeEntropy entropy;
    const auto task = tabular_task(mdp);
    const double offset = std::log(1.0 / 3.0) + 1.0;
    for (std::size_t a = 0; a < 3; ++a) {
        const double est = mc_augmented_q(model, uniform, task, entropy, 1.0, StateVector(2.0), a, {0.0, 200, 1}, rng);
        CHECK(est == doctest::Approx(mdp.rewards()(2, static_cast<Eigen::Index>(a)) + offset).epsilon(1e-14));
    }

    std::vector<Eigen::MatrixXd> P(3, Eigen::MatrixXd::Constant(3, 3, 1.0 / 3.0));
    const TabularMDP silent(P, Eigen::MatrixXd::Zero(3, 3), 0.4, Eigen::VectorXd::Constant(3, 1.0 / 3.0));
    const TabularTransitionModel silent_model(silent);
    const TabularPolicy pi((Eigen::MatrixXd(3, 3) << 0.2, 0.3, 0.5, 0.6, 0.2, 0.2, 0.1, 0.1, 0.8).finished());
    const auto off = augmented_q_offset(entropy, pi.action_distribution(StateVector(1.0)), 0.1);
    for (std::size_t a = 0; a < 3; ++a) {
        CHECK(mc_augmented_q(silent_model, pi, tabular_task(silent), entropy, 0.1, StateVector(1.0), a, {0.4, 200, 1}, rng) ==
              off[a]);
    }

    const auto chain = testing::load_shipped_mdp("ring4.txt");
    const TabularTransitionModel ring(chain);
    const TabularPolicy ring_pi(Eigen::MatrixXd::Constant(4, 2, 0.5));
    const auto ring_off = augmented_q_offset(entropy, SimplexVector::uniform(2), 0.1);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng a(seed), b(seed);
        const double composed = mc_augmented_q(ring, ring_pi, tabular_task(chain), entropy, 0.1, StateVector(2.0), 1,
                                               {chain.gamma(), 200, 1}, a);
        const double separate =
            mc_q_estimate(ring, ring_pi, tabular_task(chain), StateVector(2.0), 1, {chain.gamma(), 200, 1}, b) + ring_off[1];
        CHECK(composed == separate);
    }
}

TEST_CASE("estimates are deterministic given the seed") {
    const auto mdp = testing::load_shipped_mdp("dense5.txt");
    const TabularTransitionModel model(mdp);
    const TabularPolicy pi(Eigen::MatrixXd::Constant(5, 3, 1.0 / 3.0));
    Rng a(9), b(9);
    const auto x = mc_q_average(model, pi, tabular_task(mdp), StateVector(3.0), 2, {0.5, 200, 1000}, a);
    const auto y = mc_q_average(model, pi, tabular_task(mdp), StateVector(3.0), 2, {0.5, 200, 1000}, b);
    CHECK(x.mean == y.mean);
    CHECK(x.standard_error == y.standard_error);

    const auto s = summarize({3.0, 1.0, 2.0});
    CHECK(s.mean == 2.0);
    CHECK(s.standard_error == doctest::Approx(1.0 / std::sqrt(3.0)));
}
