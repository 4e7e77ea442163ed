#include "moma/tabular.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace moma;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Fixed-point iteration V <- r_pi + gamma P_pi V, independent of the direct solvers.
VectorXd iterate_value(const TabularMDP& mdp, const PolicyMatrix& pi) {
    const auto S = static_cast<Eigen::Index>(mdp.num_states());
    VectorXd v = VectorXd::Zero(S);
    for (int it = 0; it < 5000; ++it) {
        VectorXd next = VectorXd::Zero(S);
        for (Eigen::Index s = 0; s < S; ++s) {
            for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
                const auto ai = static_cast<Eigen::Index>(a);
                next[s] += pi(s, ai) * (mdp.rewards()(s, ai) + mdp.gamma() * mdp.transition(a).row(s).dot(v));
            }
        }
        v = next;
    }
    return v;
}

MatrixXd residual_of_occupancy(const TabularMDP& mdp, const PolicyMatrix& pi, const MatrixXd& d) {
    // Flow equation: d_s = (1 - gamma) mu0 + gamma sum_{s', a'} d(s', a') P(s | s', a').
    const auto S = static_cast<Eigen::Index>(mdp.num_states());
    VectorXd inflow = (1.0 - mdp.gamma()) * mdp.initial();
    for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
        inflow += mdp.gamma() * mdp.transition(a).transpose() * d.col(static_cast<Eigen::Index>(a));
    }
    MatrixXd r(S, 1);
    r.col(0) = d.rowwise().sum() - inflow;
    (void)pi;
    return r;
}

TabularMDP two_state_cycle() {
    std::vector<MatrixXd> P{(MatrixXd(2, 2) << 0, 1, 1, 0).finished()};
    return TabularMDP(P, (MatrixXd(2, 1) << 1, 0).finished(), 0.5, Eigen::Vector2d(1, 0));
}

} // namespace

TEST_CASE("instances validate") {
    std::vector<MatrixXd> bad{(MatrixXd(2, 2) << 0.5, 0.4, 0, 1).finished()};
    CHECK_THROWS_AS(TabularMDP(bad, MatrixXd::Zero(2, 1), 0.5, Eigen::Vector2d(1, 0)), InvalidInput);
    std::vector<MatrixXd> neg{(MatrixXd(2, 2) << 1.5, -0.5, 0, 1).finished()};
    CHECK_THROWS_AS(TabularMDP(neg, MatrixXd::Zero(2, 1), 0.5, Eigen::Vector2d(1, 0)), InvalidInput);
    for (const auto& name : testing::shipped_mdp_names()) CHECK_NOTHROW(testing::load_shipped_mdp(name));
    std::stringstream truncated("2 1\n0.5\n1 0\n1 0\n");
    CHECK_THROWS_AS(parse_tabular_mdp(truncated), InvalidInput);
}

TEST_CASE("exact policy value") {
    Rng rng(1);
    SUBCASE("gamma = 0 is the expected immediate reward") {
        const auto mdp = random_tabular_mdp(4, 3, 0.0, rng);
        const auto pi = random_policy_matrix(4, 3, rng);
        const VectorXd v = exact_policy_value(mdp, pi);
        for (Eigen::Index s = 0; s < 4; ++s) CHECK(v[s] == doctest::Approx(pi.row(s).dot(mdp.rewards().row(s))));
    }
    SUBCASE("single state with constant reward") {
        std::vector<MatrixXd> P{MatrixXd::Ones(1, 1)};
        const TabularMDP mdp(P, MatrixXd::Constant(1, 1, 2.5), 0.8, VectorXd::Ones(1));
        CHECK(exact_policy_value(mdp, MatrixXd::Ones(1, 1))[0] == doctest::Approx(2.5 / 0.2).epsilon(1e-13));
    }
    SUBCASE("Bellman residual and fixed-point agreement") {
        for (int trial = 0; trial < 10; ++trial) {
            const auto mdp = random_tabular_mdp(5, 3, 0.9, rng);
            const auto pi = random_policy_matrix(5, 3, rng);
            const VectorXd v = exact_policy_value(mdp, pi);
            const VectorXd residual = v - mdp.policy_reward(pi) - mdp.gamma() * mdp.policy_transition(pi) * v;
            CHECK(residual.cwiseAbs().maxCoeff() < 1e-10);
            CHECK((v - iterate_value(mdp, pi)).cwiseAbs().maxCoeff() < 1e-9);
        }
    }
}

TEST_CASE("exact Q") {
    Rng rng(2);
    const auto mdp0 = random_tabular_mdp(3, 2, 0.0, rng);
    const auto pi0 = random_policy_matrix(3, 2, rng);
    CHECK((exact_q(mdp0, pi0) - mdp0.rewards()).cwiseAbs().maxCoeff() == 0.0);

    for (const auto& name : testing::shipped_mdp_names()) {
        const auto mdp = testing::load_shipped_mdp(name);
        const auto pi = random_policy_matrix(mdp.num_states(), mdp.num_actions(), rng);
        const MatrixXd q = exact_q(mdp, pi);
        const VectorXd v = exact_policy_value(mdp, pi);
        for (Eigen::Index s = 0; s < q.rows(); ++s) CHECK(std::abs(pi.row(s).dot(q.row(s)) - v[s]) < 1e-10);
    }

    const auto cycle = two_state_cycle();
    const MatrixXd q = exact_q(cycle, MatrixXd::Ones(2, 1));
    // V(s0) = 1 + V(s1)/2 and V(s1) = V(s0)/2 give V = (4/3, 2/3).
    CHECK(q(0, 0) == doctest::Approx(1.0 + 0.5 * (2.0 / 3.0)).epsilon(1e-14));
    CHECK(exact_policy_value(cycle, MatrixXd::Ones(2, 1))[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("exact occupancy") {
    Rng rng(3);
    SUBCASE("gamma = 0") {
        const auto mdp = random_tabular_mdp(4, 2, 0.0, rng);
        const auto pi = random_policy_matrix(4, 2, rng);
        const MatrixXd d = exact_occupancy(mdp, pi);
        for (Eigen::Index s = 0; s < 4; ++s) {
            for (Eigen::Index a = 0; a < 2; ++a) CHECK(d(s, a) == doctest::Approx(mdp.initial()[s] * pi(s, a)));
        }
    }
    SUBCASE("normalization, flow equations, value identity") {
        for (const auto& name : testing::shipped_mdp_names()) {
            const auto mdp = testing::load_shipped_mdp(name);
            const auto pi = random_policy_matrix(mdp.num_states(), mdp.num_actions(), rng);
            const MatrixXd d = exact_occupancy(mdp, pi);
            CHECK(std::abs(d.sum() - 1.0) < 1e-10);
            CHECK(d.minCoeff() >= 0.0);
            CHECK(residual_of_occupancy(mdp, pi, d).cwiseAbs().maxCoeff() < 1e-10);
            const double via_d = d.cwiseProduct(mdp.rewards()).sum() / (1.0 - mdp.gamma());
            CHECK(std::abs(via_d - exact_initial_value(mdp, pi)) < 1e-10);
        }
    }
    SUBCASE("absorbing chain") {
        const double q = 0.3, gamma = 0.7;
        std::vector<MatrixXd> P{(MatrixXd(2, 2) << 1 - q, q, 0, 1).finished()};
        const TabularMDP mdp(P, MatrixXd::Zero(2, 1), gamma, Eigen::Vector2d(1, 0));
        const MatrixXd d = exact_occupancy(mdp, MatrixXd::Ones(2, 1));
        const double start_mass = (1 - gamma) / (1 - gamma * (1 - q));
        CHECK(d(0, 0) == doctest::Approx(start_mass).epsilon(1e-14));
        CHECK(d(1, 0) == doctest::Approx(1 - start_mass).epsilon(1e-14));
    }
}

TEST_CASE("simulation lemma") {
    Rng rng(4);
    const auto base = random_tabular_mdp(4, 2, 0.8, rng);
    const auto pi = random_policy_matrix(4, 2, rng);
    const auto same = simulation_lemma_check(base, base, pi);
    CHECK(std::abs(same.lhs) < 1e-14);
    CHECK(std::abs(same.rhs) < 1e-14);

    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_tabular_mdp(4, 3, 0.9, rng);
        const auto other = random_tabular_mdp(4, 3, 0.9, rng);
        std::vector<MatrixXd> hat;
        for (std::size_t a = 0; a < 3; ++a) hat.push_back(other.transition(a));
        const auto p_hat = p.with_transitions(hat);
        const auto policy = random_policy_matrix(4, 3, rng);
        const auto r = simulation_lemma_check(p, p_hat, policy);
        CHECK(std::abs(r.lhs - (exact_initial_value(p, policy) - exact_initial_value(p_hat, policy))) < 1e-12);
        CHECK(std::abs(r.lhs - r.rhs) < 1e-8);
        CHECK(std::abs(r.lhs) <= r.tv_bound + 1e-12);
    }
}

TEST_CASE("concentrability") {
    std::vector<MatrixXd> P(2, MatrixXd::Constant(2, 2, 0.5));
    const TabularMDP mdp(P, MatrixXd::Zero(2, 2), 0.0, Eigen::Vector2d(0.5, 0.5));
    const PolicyMatrix pi = (MatrixXd(2, 2) << 0.2, 0.8, 0.6, 0.4).finished();
    // d = mu0 * pi = [[0.1, 0.4], [0.3, 0.2]]; ratios to 0.25 are 0.4, 1.6, 1.2, 0.8.
    CHECK(concentrability(mdp, pi, MatrixXd::Constant(2, 2, 0.25)) == doctest::Approx(1.6).epsilon(1e-14));
    CHECK(concentrability(mdp, pi, exact_occupancy(mdp, pi)) == doctest::Approx(1.0).epsilon(1e-14));
    const MatrixXd gap = (MatrixXd(2, 2) << 0.5, 0.0, 0.25, 0.25).finished();
    CHECK(concentrability(mdp, pi, gap) == std::numeric_limits<double>::infinity());
}

TEST_CASE("value iteration") {
    Rng rng(5);
    for (const auto& name : testing::shipped_mdp_names()) {
        const auto mdp = testing::load_shipped_mdp(name);
        const auto vi = value_iteration(mdp);
        const VectorXd v_pi = exact_policy_value(mdp, vi.greedy_policy);
        CHECK((v_pi - vi.values).cwiseAbs().maxCoeff() < 1e-10);
        const MatrixXd d = exact_occupancy(mdp, vi.greedy_policy);
        CHECK(std::abs(d.cwiseProduct(mdp.rewards()).sum() / (1 - mdp.gamma()) - mdp.initial().dot(vi.values)) < 1e-10);
        for (int k = 0; k < 20; ++k) {
            const auto pi = random_policy_matrix(mdp.num_states(), mdp.num_actions(), rng);
            CHECK((exact_policy_value(mdp, pi).array() <= vi.values.array() + 1e-10).all());
        }
    }
}

TEST_CASE("softmax tabular model gradient") {
    Rng rng(6);
    for (const auto& name : testing::shipped_mdp_names()) {
        const auto base = testing::load_shipped_mdp(name);
        const auto S = base.num_states(), A = base.num_actions();
        VectorXd logits(static_cast<Eigen::Index>(S * A * S));
        for (Eigen::Index k = 0; k < logits.size(); ++k) logits[k] = standard_normal(rng);
        const SoftmaxTabularModel model(S, A, logits);
        const auto pi = random_policy_matrix(S, A, rng);
        const VectorXd g = exact_value_gradient(model, base, pi);
        for (Eigen::Index k = 0; k < logits.size(); ++k) {
            const double h = 1e-5;
            VectorXd up = logits, down = logits;
            up[k] += h;
            down[k] -= h;
            const double fd = (exact_initial_value(SoftmaxTabularModel(S, A, up).to_mdp(base), pi) -
                               exact_initial_value(SoftmaxTabularModel(S, A, down).to_mdp(base), pi)) /
                              (2 * h);
            CHECK(std::abs(g[k] - fd) <= 1e-6 * std::max(std::abs(fd), 1e-3));
        }
    }
}

TEST_CASE("softmax tabular score and MLE") {
    const auto base = testing::load_shipped_mdp("chain3.txt");
    Rng rng(7);
    VectorXd logits(3 * 2 * 3);
    for (Eigen::Index k = 0; k < logits.size(); ++k) logits[k] = standard_normal(rng);
    const SoftmaxTabularModel model(3, 2, logits);
    const StateVector s(1.0), next(2.0);
    const VectorXd score = model.score(s, 1, next);
    for (Eigen::Index k = 0; k < logits.size(); ++k) {
        VectorXd up = logits, down = logits;
        up[k] += 1e-5;
        down[k] -= 1e-5;
        const double fd = (SoftmaxTabularModel(3, 2, up).log_density(s, 1, next) -
                           SoftmaxTabularModel(3, 2, down).log_density(s, 1, next)) / 2e-5;
        CHECK(std::abs(score[k] - fd) < 1e-8);
    }

    const auto data = sample_tabular_dataset(base, 60000, 3);
    const auto mle = fit_tabular_mle(data, 3, 2);
    for (std::size_t st = 0; st < 3; ++st) {
        for (std::size_t a = 0; a < 2; ++a) {
            for (std::size_t t = 0; t < 3; ++t) CHECK(std::abs(mle.probability(st, a, t) - base.probability(st, a, t)) < 0.02);
        }
    }
}
