#include "moma/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <string>

namespace moma {

Eigen::VectorXd TransitionModel::score(const StateVector& s, std::size_t a, const StateVector& s_next) const {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_parameters()));
    accumulate_score(s, a, s_next, 1.0, std::span<double>(grad.data(), static_cast<std::size_t>(grad.size())));
    return grad;
}

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) {
    // logistic(+-40) already rounds to exactly 1 or 0.
    constexpr double kClamp = 40.0;
    if (p <= 0.0) return -kClamp;
    if (p >= 1.0) return kClamp;
    return std::clamp(std::log(p) - std::log1p(-p), -kClamp, kClamp);
}

MixtureWalkFamily MixtureWalkFamily::random_walk(double variance) {
    return MixtureWalkFamily{{{-2.0, 0.0}, {0.0, 2.0}, {0.0, 2.0}}, variance};
}

namespace {

void validate_family(const MixtureWalkFamily& family) {
    if (family.means.size() < 2) throw InvalidInput("MixtureWalkFamily: need at least two actions");
    if (!(family.variance > 0.0) || !std::isfinite(family.variance)) {
        throw InvalidInput("MixtureWalkFamily: variance must be positive");
    }
}

double log_normal_pdf(double x, double mean, double variance) {
    const double d = x - mean;
    return -0.5 * (d * d / variance + std::log(2.0 * std::numbers::pi * variance));
}

double log_sum_exp(double a, double b) {
    const double m = std::max(a, b);
    if (m == -INFINITY) return m;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

} // namespace

MixtureWalkModel::MixtureWalkModel(MixtureWalkFamily family, std::vector<double> psi, Eigen::VectorXd logits)
    : family_(std::move(family)), psi_(std::move(psi)), logits_(std::move(logits)) {}

MixtureWalkModel::MixtureWalkModel(MixtureWalkFamily family, const std::vector<double>& psi)
    : family_(std::move(family)), psi_(psi) {
    validate_family(family_);
    if (psi_.size() != family_.num_actions()) throw InvalidInput("MixtureWalkModel: psi size mismatch");
    logits_.resize(static_cast<Eigen::Index>(psi_.size()));
    for (std::size_t a = 0; a < psi_.size(); ++a) {
        if (!(psi_[a] >= 0.0 && psi_[a] <= 1.0)) throw InvalidInput("MixtureWalkModel: psi outside [0, 1]");
        logits_[static_cast<Eigen::Index>(a)] = logit(psi_[a]);
    }
}

MixtureWalkModel MixtureWalkModel::from_logits(MixtureWalkFamily family, const Eigen::VectorXd& logits) {
    validate_family(family);
    if (static_cast<std::size_t>(logits.size()) != family.num_actions()) {
        throw InvalidInput("MixtureWalkModel: logit count mismatch");
    }
    std::vector<double> psi(family.num_actions());
    for (std::size_t a = 0; a < psi.size(); ++a) {
        const double x = logits[static_cast<Eigen::Index>(a)];
        if (!std::isfinite(x)) throw InvalidInput("MixtureWalkModel: non-finite logit");
        psi[a] = logistic(x);
    }
    return MixtureWalkModel(std::move(family), std::move(psi), logits);
}

std::shared_ptr<const TransitionModel> MixtureWalkModel::with_parameters(const Eigen::VectorXd& phi) const {
    return std::make_shared<MixtureWalkModel>(from_logits(family_, phi));
}

double MixtureWalkModel::increment_log_density(std::size_t a, double delta) const {
    const auto& mu = family_.means.at(a);
    const double psi = psi_[a];
    const double first = psi > 0.0 ? std::log(psi) + log_normal_pdf(delta, mu[0], family_.variance) : -INFINITY;
    const double second = psi < 1.0 ? std::log1p(-psi) + log_normal_pdf(delta, mu[1], family_.variance) : -INFINITY;
    return log_sum_exp(first, second);
}

double MixtureWalkModel::responsibility(std::size_t a, double delta) const {
    const auto& mu = family_.means.at(a);
    const double psi = psi_[a];
    if (psi <= 0.0) return 0.0;
    if (psi >= 1.0) return 1.0;
    // Log-odds of component one against component two.
    const double log_odds = std::log(psi) - std::log1p(-psi)
                            + log_normal_pdf(delta, mu[0], family_.variance)
                            - log_normal_pdf(delta, mu[1], family_.variance);
    return logistic(log_odds);
}

double MixtureWalkModel::log_density(const StateVector& s, std::size_t a, const StateVector& s_next) const {
    if (a >= num_actions()) throw InvalidInput("MixtureWalkModel: action out of range");
    if (s.size() != 1 || s_next.size() != 1) throw OutOfSupport("MixtureWalkModel: scalar states only");
    const double value = increment_log_density(a, s_next.scalar() - s.scalar());
    if (!std::isfinite(value)) throw OutOfSupport("MixtureWalkModel: zero density");
    return value;
}

void MixtureWalkModel::accumulate_score(const StateVector& s, std::size_t a, const StateVector& s_next,
                                        double weight, std::span<double> grad) const {
    if (a >= num_actions()) throw InvalidInput("MixtureWalkModel: action out of range");
    if (s.size() != 1 || s_next.size() != 1) throw OutOfSupport("MixtureWalkModel: scalar states only");
    // d/dlogit log(psi N1 + (1 - psi) N2) = responsibility - psi.
    grad[a] += weight * (responsibility(a, s_next.scalar() - s.scalar()) - psi_[a]);
}

StateVector MixtureWalkModel::sample_next(const StateVector& s, std::size_t a, Rng& rng) const {
    const auto& mu = family_.means.at(a);
    const double mean = uniform01(rng) < psi_[a] ? mu[0] : mu[1];
    return StateVector(s.scalar() + mean + std::sqrt(family_.variance) * standard_normal(rng));
}

// ---------------------------------------------------------------------------

EmFitResult em_fit(const OfflineDataset& dataset, const MixtureWalkFamily& family, const EmOptions& options) {
    validate_family(family);
    if (dataset.num_actions() != family.num_actions()) throw InvalidInput("em_fit: action count mismatch");
    if (!(options.initial_psi > 0.0 && options.initial_psi < 1.0)) throw InvalidInput("em_fit: bad initial psi");

    const std::size_t m = family.num_actions();
    std::vector<std::vector<double>> increments(m);
    for (const Transition& t : dataset.transitions()) {
        increments[t.action].push_back(t.next_state.scalar() - t.state.scalar());
    }

    std::vector<double> psi(m, options.initial_psi);
    std::vector<bool> unfitted(m, false);
    std::vector<int> iterations(m, 0);
    std::vector<std::vector<double>> trace(m);

    for (std::size_t a = 0; a < m; ++a) {
        const auto& deltas = increments[a];
        if (deltas.empty()) {
            unfitted[a] = true;
            continue;
        }
        std::vector<double> one_action(m, 0.5);
        auto log_likelihood = [&](double p) {
            one_action[a] = p;
            const MixtureWalkModel model(family, one_action);
            double total = 0.0;
            for (double d : deltas) total += model.increment_log_density(a, d);
            return total;
        };

        double current = log_likelihood(psi[a]);
        trace[a].push_back(current);
        for (int it = 0; it < options.max_iterations; ++it) {
            one_action[a] = psi[a];
            const MixtureWalkModel model(family, one_action);
            double sum_resp = 0.0;
            for (double d : deltas) sum_resp += model.responsibility(a, d);
            psi[a] = sum_resp / static_cast<double>(deltas.size());
            const double next = log_likelihood(psi[a]);
            trace[a].push_back(next);
            iterations[a] = it + 1;
            const double improvement = next - current;
            current = next;
            if (improvement < options.tolerance) break;
        }
    }
    return EmFitResult{MixtureWalkModel(family, psi), std::move(unfitted), std::move(iterations), std::move(trace)};
}

// ---------------------------------------------------------------------------

namespace {

std::string action_key(std::size_t m, std::size_t a) {
    if (m == 3) {
        static const char* names[] = {"left", "stay", "right"};
        return names[a];
    }
    return std::to_string(a);
}

} // namespace

void write_model_checkpoint(const MixtureWalkModel& model, std::ostream& out) {
    const auto& family = model.family();
    const std::size_t m = family.num_actions();
    out << "actions = " << m << '\n';
    for (std::size_t a = 0; a < m; ++a) out << "psi_" << action_key(m, a) << " = " << format_real(model.psi(a)) << '\n';
    for (std::size_t a = 0; a < m; ++a) {
        out << "mu1_" << action_key(m, a) << " = " << format_real(family.means[a][0]) << '\n';
        out << "mu2_" << action_key(m, a) << " = " << format_real(family.means[a][1]) << '\n';
    }
    out << "variance = " << format_real(family.variance) << '\n';
}

MixtureWalkModel read_model_checkpoint(std::istream& in) {
    std::map<std::string, std::string> values;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw InvalidInput("model checkpoint: malformed line '" + line + "'");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        values[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    auto get = [&](const std::string& key) {
        const auto it = values.find(key);
        if (it == values.end()) throw InvalidInput("model checkpoint: missing key " + key);
        return std::stod(it->second);
    };
    const auto m = static_cast<std::size_t>(get("actions"));
    MixtureWalkFamily family;
    family.variance = get("variance");
    std::vector<double> psi(m);
    for (std::size_t a = 0; a < m; ++a) {
        psi[a] = get("psi_" + action_key(m, a));
        family.means.push_back({get("mu1_" + action_key(m, a)), get("mu2_" + action_key(m, a))});
    }
    return MixtureWalkModel(std::move(family), psi);
}

} // namespace moma
