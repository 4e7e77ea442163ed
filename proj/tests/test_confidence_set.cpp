#include "moma/confidence_set.hpp"
#include "moma/tabular.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace moma;

namespace {

const auto kFamily = MixtureWalkFamily::random_walk(0.1);

std::shared_ptr<const OfflineDataset> mixed_dataset(const MixtureWalkModel& truth, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Transition> ts;
    for (int i = 0; i < n; ++i) {
        const StateVector s(-2.0 + 4.0 * uniform01(rng));
        const auto a = static_cast<std::size_t>(i % 3);
        ts.push_back({s, a, 0.0, truth.sample_next(s, a, rng), false});
    }
    return std::make_shared<const OfflineDataset>(std::move(ts), 3, 0.4, seed);
}

double direct_nll(const std::vector<double>& psi, const OfflineDataset& d) {
    double total = 0.0;
    for (const auto& t : d.transitions()) {
        const double x = t.next_state.scalar() - t.state.scalar();
        const auto& mu = kFamily.means[t.action];
        auto pdf = [&](double m) { return std::exp(-(x - m) * (x - m) / 0.2) / std::sqrt(0.2 * std::numbers::pi); };
        total -= std::log(psi[t.action] * pdf(mu[0]) + (1.0 - psi[t.action]) * pdf(mu[1]));
    }
    return total / static_cast<double>(d.size());
}

} // namespace

TEST_CASE("empirical negative log-likelihood") {
    SUBCASE("single transition") {
        // Degenerate tabular row with probability e^{-1.5} on the observed successor.
        const double p = std::exp(-1.5);
        std::vector<Eigen::MatrixXd> P(2, Eigen::MatrixXd(2, 2));
        P[0] << p, 1 - p, 0.5, 0.5;
        P[1] << 0.5, 0.5, 0.5, 0.5;
        const TabularTransitionModel model(TabularMDP(P, Eigen::MatrixXd::Zero(2, 2), 0.5, Eigen::Vector2d(1, 0)));
        const OfflineDataset d({{StateVector(0.0), 0, 0.0, StateVector(0.0), false}}, 2, 0.5, 0);
        CHECK(empirical_nll(model, d) == doctest::Approx(1.5).epsilon(1e-14));
    }
    const MixtureWalkModel truth(kFamily, {0.6, 0.6, 0.4});
    const auto d = mixed_dataset(truth, 10, 3);
    SUBCASE("duplication leaves the mean unchanged") {
        auto ts = std::vector<Transition>(d->transitions().begin(), d->transitions().end());
        ts.insert(ts.end(), d->transitions().begin(), d->transitions().end());
        const OfflineDataset doubled(ts, 3, 0.4, 0);
        CHECK(empirical_nll(truth, doubled) == doctest::Approx(empirical_nll(truth, *d)).epsilon(1e-14));
    }
    SUBCASE("matches direct summation") {
        CHECK(std::abs(empirical_nll(truth, *d) - direct_nll(truth.psi(), *d)) < 1e-12);
    }
    SUBCASE("zero density names the transition") {
        std::vector<Eigen::MatrixXd> P(2, Eigen::MatrixXd::Identity(2, 2));
        const TabularTransitionModel model(TabularMDP(P, Eigen::MatrixXd::Zero(2, 2), 0.5, Eigen::Vector2d(1, 0)));
        const OfflineDataset bad({{StateVector(0.0), 0, 0.0, StateVector(0.0), false},
                                  {StateVector(0.0), 1, 0.0, StateVector(1.0), false}},
                                 2, 0.5, 0);
        try {
            empirical_nll(model, bad);
            FAIL("expected OutOfSupport");
        } catch (const OutOfSupport& e) {
            CHECK(std::string(e.what()).find("transition 1") != std::string::npos);
        }
    }
}

TEST_CASE("loss gap") {
    const MixtureWalkModel truth(kFamily, {0.6, 0.6, 0.4});
    const auto d = mixed_dataset(truth, 600, 4);
    const auto mle = em_fit(*d, kFamily, {0.5, 1e-13, 10000}).model;
    const auto spec = ConfidenceSetSpec::from_reference(d, mle, 4.0);

    CHECK(loss_gap(mle, spec) == 0.0);
    CHECK(in_confidence_set(mle, spec));
    CHECK(spec.alpha_n() == doctest::Approx(4.0 / 600));

    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        Eigen::VectorXd phi = mle.parameters();
        for (int k = 0; k < 3; ++k) phi[k] += standard_normal(rng);
        CHECK(loss_gap(*mle.with_parameters(phi), spec) >= -1e-8);
    }

    std::vector<double> perturbed = mle.psi();
    perturbed[0] += 0.1;
    const MixtureWalkModel moved(kFamily, perturbed);
    const double gap = loss_gap(moved, spec);
    CHECK(gap > 0.0);
    CHECK(std::abs(gap - (direct_nll(perturbed, *d) - direct_nll(mle.psi(), *d))) < 1e-12);

    const ConfidenceSetSpec tight(d, spec.reference_loss(), 0.0);
    CHECK_FALSE(in_confidence_set(moved, tight));
    CHECK(in_confidence_set(mle, tight));

    SUBCASE("permutation invariance") {
        auto ts = std::vector<Transition>(d->transitions().begin(), d->transitions().end());
        std::reverse(ts.begin(), ts.end());
        std::rotate(ts.begin(), ts.begin() + 17, ts.end());
        const auto shuffled = std::make_shared<const OfflineDataset>(ts, 3, 0.4, 0);
        const ConfidenceSetSpec spec2(shuffled, spec.reference_loss(), spec.alpha_n());
        CHECK(loss_gap(moved, spec2) == doctest::Approx(gap).epsilon(1e-12));
    }
}

TEST_CASE("gap gradient") {
    const MixtureWalkModel truth(kFamily, {0.6, 0.6, 0.4});
    const auto d = mixed_dataset(truth, 300, 5);
    const auto spec = ConfidenceSetSpec::from_reference(d, truth, 1.0);
    Rng rng(9);
    SUBCASE("finite differences") {
        for (int trial = 0; trial < 20; ++trial) {
            Eigen::VectorXd phi(3);
            for (int k = 0; k < 3; ++k) phi[k] = 1.5 * standard_normal(rng);
            const auto model = MixtureWalkModel::from_logits(kFamily, phi);
            const Eigen::VectorXd g = gap_gradient(model, *d);
            for (int k = 0; k < 3; ++k) {
                Eigen::VectorXd up = phi, down = phi;
                up[k] += 1e-5;
                down[k] -= 1e-5;
                const double fd = (loss_gap(*model.with_parameters(up), spec) -
                                   loss_gap(*model.with_parameters(down), spec)) / 2e-5;
                CHECK(std::abs(g[k] - fd) <= 1e-4 * std::max(std::abs(fd), 1e-4));
            }
        }
    }
    SUBCASE("equals the mean negated score") {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
        for (const auto& t : d->transitions()) mean -= truth.score(t.state, t.action, t.next_state);
        mean /= static_cast<double>(d->size());
        CHECK((gap_gradient(truth, *d) - mean).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("first-order condition at the MLE") {
        const auto big = mixed_dataset(truth, 100000, 6);
        const auto mle = em_fit(*big, kFamily, {0.5, 1e-12, 10000}).model;
        CHECK(gap_gradient(mle, *big).norm() < 1e-2);
    }
    SUBCASE("unused parameter has zero gradient") {
        std::vector<Transition> ts;
        for (const auto& t : d->transitions()) {
            if (t.action != 2) ts.push_back(t);
        }
        const OfflineDataset partial(ts, 3, 0.4, 0);
        CHECK(gap_gradient(truth, partial)[2] == 0.0);
    }
}

TEST_CASE("confidence set coverage of the true model") {
    // n E_n(P*) is asymptotically chi-square(3) / 2 for three free weights.
    const MixtureWalkModel truth(kFamily, {0.6, 0.6, 0.4});
    int covered_default = 0, covered_unit = 0;
    const int reps = 100;
    for (int r = 0; r < reps; ++r) {
        const auto d = mixed_dataset(truth, 5000, 1000 + r);
        const auto mle = em_fit(*d, kFamily, {0.5, 1e-12, 10000}).model;
        covered_default += in_confidence_set(truth, ConfidenceSetSpec::from_reference(d, mle, 4.0)) ? 1 : 0;
        covered_unit += in_confidence_set(truth, ConfidenceSetSpec::from_reference(d, mle, 1.0)) ? 1 : 0;
    }
    MESSAGE("coverage at c = 4: " << covered_default << "/100, at c = 1: " << covered_unit << "/100");
    CHECK(covered_default >= 90);
    // P(chi2_3 <= 2) = 0.428; 3-sigma band over 100 replications.
    CHECK(covered_unit >= 28);
    CHECK(covered_unit <= 58);
}
