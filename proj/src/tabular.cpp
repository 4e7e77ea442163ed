#include "moma/tabular.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <sstream>
#include <string>

namespace moma {

namespace {

using Index = Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

void validate_row_stochastic(const Eigen::MatrixXd& m, const char* what) {
    for (Index r = 0; r < m.rows(); ++r) {
        if ((m.row(r).array() < 0.0).any()) throw InvalidInput(std::string(what) + ": negative probability");
        if (!m.row(r).allFinite()) throw InvalidInput(std::string(what) + ": non-finite probability");
        if (std::abs(m.row(r).sum() - 1.0) > 1e-12) throw InvalidInput(std::string(what) + ": row does not sum to 1");
    }
}

Eigen::VectorXd dirichlet_ones(std::size_t n, Rng& rng) {
    Eigen::VectorXd v(idx(n));
    for (Index i = 0; i < v.size(); ++i) v[i] = -std::log(1.0 - uniform01(rng));
    return v / v.sum();
}

} // namespace

TabularMDP::TabularMDP(std::vector<Eigen::MatrixXd> transitions, Eigen::MatrixXd rewards, double gamma,
                       Eigen::VectorXd initial)
    : transitions_(std::move(transitions)), rewards_(std::move(rewards)), gamma_(gamma), initial_(std::move(initial)) {
    (void)DiscountConfig(gamma_);
    const Index states = rewards_.rows();
    if (states == 0) throw InvalidInput("TabularMDP: no states");
    if (states > 100) throw InvalidInput("TabularMDP: at most 100 states");
    if (transitions_.empty() || idx(transitions_.size()) != rewards_.cols()) {
        throw InvalidInput("TabularMDP: reward columns must match action count");
    }
    for (const auto& p : transitions_) {
        if (p.rows() != states || p.cols() != states) throw InvalidInput("TabularMDP: transition shape mismatch");
        validate_row_stochastic(p, "TabularMDP");
    }
    if (!rewards_.allFinite()) throw InvalidInput("TabularMDP: non-finite reward");
    if (initial_.size() != states) throw InvalidInput("TabularMDP: initial distribution size mismatch");
    if ((initial_.array() < 0.0).any() || std::abs(initial_.sum() - 1.0) > 1e-12) {
        throw InvalidInput("TabularMDP: initial distribution is not a distribution");
    }
}

TabularMDP TabularMDP::with_transitions(std::vector<Eigen::MatrixXd> transitions) const {
    return TabularMDP(std::move(transitions), rewards_, gamma_, initial_);
}

Eigen::MatrixXd TabularMDP::policy_transition(const PolicyMatrix& policy) const {
    const Index states = idx(num_states());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(states, states);
    for (std::size_t a = 0; a < num_actions(); ++a) {
        out += policy.col(idx(a)).asDiagonal() * transitions_[a];
    }
    return out;
}

Eigen::VectorXd TabularMDP::policy_reward(const PolicyMatrix& policy) const {
    return policy.cwiseProduct(rewards_).rowwise().sum();
}

void validate_policy_matrix(const TabularMDP& mdp, const PolicyMatrix& policy) {
    if (policy.rows() != idx(mdp.num_states()) || policy.cols() != idx(mdp.num_actions())) {
        throw InvalidInput("policy matrix shape mismatch");
    }
    for (Index s = 0; s < policy.rows(); ++s) {
        if ((policy.row(s).array() < 0.0).any() || std::abs(policy.row(s).sum() - 1.0) > kSimplexTolerance) {
            throw InvalidInput("policy matrix row " + std::to_string(s) + " is not a distribution");
        }
    }
}

Eigen::VectorXd exact_policy_value(const TabularMDP& mdp, const PolicyMatrix& policy) {
    validate_policy_matrix(mdp, policy);
    const Index states = idx(mdp.num_states());
    const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(states, states) - mdp.gamma() * mdp.policy_transition(policy);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
    return lu.solve(mdp.policy_reward(policy));
}

double exact_initial_value(const TabularMDP& mdp, const PolicyMatrix& policy) {
    return mdp.initial().dot(exact_policy_value(mdp, policy));
}

Eigen::MatrixXd exact_q(const TabularMDP& mdp, const PolicyMatrix& policy) {
    const Eigen::VectorXd v = exact_policy_value(mdp, policy);
    Eigen::MatrixXd q = mdp.rewards();
    for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
        q.col(idx(a)) += mdp.gamma() * mdp.transition(a) * v;
    }
    return q;
}

Eigen::MatrixXd exact_occupancy(const TabularMDP& mdp, const PolicyMatrix& policy) {
    validate_policy_matrix(mdp, policy);
    const Index states = idx(mdp.num_states());
    const Eigen::MatrixXd system =
        (Eigen::MatrixXd::Identity(states, states) - mdp.gamma() * mdp.policy_transition(policy)).transpose();
    const Eigen::VectorXd state_occupancy =
        Eigen::PartialPivLU<Eigen::MatrixXd>(system).solve((1.0 - mdp.gamma()) * mdp.initial());
    return state_occupancy.asDiagonal() * policy;
}

SimulationLemmaResult simulation_lemma_check(const TabularMDP& p, const TabularMDP& p_hat, const PolicyMatrix& policy) {
    if (p.num_states() != p_hat.num_states() || p.num_actions() != p_hat.num_actions()) {
        throw InvalidInput("simulation_lemma_check: state/action spaces differ");
    }
    const double gamma = p.gamma();
    const Eigen::VectorXd v_hat = exact_policy_value(p_hat, policy);
    const Eigen::MatrixXd occupancy = exact_occupancy(p, policy);

    SimulationLemmaResult result;
    result.lhs = exact_initial_value(p, policy) - p.initial().dot(v_hat);

    double expected_gap = 0.0;
    double expected_tv = 0.0;
    for (std::size_t a = 0; a < p.num_actions(); ++a) {
        const Eigen::VectorXd gap = (p.transition(a) - p_hat.transition(a)) * v_hat;
        const Eigen::VectorXd tv = 0.5 * (p.transition(a) - p_hat.transition(a)).cwiseAbs().rowwise().sum();
        expected_gap += occupancy.col(idx(a)).dot(gap);
        expected_tv += occupancy.col(idx(a)).dot(tv);
    }
    const double scale = gamma / (1.0 - gamma);
    result.rhs = scale * expected_gap;
    result.tv_bound = 2.0 * v_hat.cwiseAbs().maxCoeff() * scale * expected_tv;
    return result;
}

double concentrability(const TabularMDP& mdp, const PolicyMatrix& target_policy, const Eigen::MatrixXd& offline) {
    const Eigen::MatrixXd target = exact_occupancy(mdp, target_policy);
    if (offline.rows() != target.rows() || offline.cols() != target.cols()) {
        throw InvalidInput("concentrability: offline distribution shape mismatch");
    }
    double worst = 0.0;
    for (Index s = 0; s < target.rows(); ++s) {
        for (Index a = 0; a < target.cols(); ++a) {
            if (target(s, a) <= 0.0) continue;
            if (offline(s, a) <= 0.0) return std::numeric_limits<double>::infinity();
            worst = std::max(worst, target(s, a) / offline(s, a));
        }
    }
    return worst;
}

ValueIterationResult value_iteration(const TabularMDP& mdp, double tolerance, int max_iterations) {
    const Index states = idx(mdp.num_states());
    const Index actions = idx(mdp.num_actions());
    Eigen::VectorXd v = Eigen::VectorXd::Zero(states);
    Eigen::MatrixXd q(states, actions);
    int it = 0;
    for (; it < max_iterations; ++it) {
        for (Index a = 0; a < actions; ++a) {
            q.col(a) = mdp.rewards().col(a) + mdp.gamma() * mdp.transition(static_cast<std::size_t>(a)) * v;
        }
        const Eigen::VectorXd next = q.rowwise().maxCoeff();
        const double change = (next - v).cwiseAbs().maxCoeff();
        v = next;
        if (change < tolerance) {
            ++it;
            break;
        }
    }
    PolicyMatrix greedy = PolicyMatrix::Zero(states, actions);
    for (Index s = 0; s < states; ++s) {
        Index best = 0;
        q.row(s).maxCoeff(&best);
        greedy(s, best) = 1.0;
    }
    return ValueIterationResult{v, greedy, it};
}

TabularMDP parse_tabular_mdp(std::istream& in) {
    std::stringstream cleaned;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        cleaned << line.substr(0, hash) << '\n';
    }
    auto next = [&]() {
        double x = 0.0;
        if (!(cleaned >> x)) throw InvalidInput("tabular instance: unexpected end of input");
        return x;
    };
    const auto states = static_cast<std::size_t>(next());
    const auto actions = static_cast<std::size_t>(next());
    const double gamma = next();
    Eigen::VectorXd initial(idx(states));
    for (std::size_t s = 0; s < states; ++s) initial[idx(s)] = next();
    std::vector<Eigen::MatrixXd> transitions(actions, Eigen::MatrixXd(idx(states), idx(states)));
    for (std::size_t s = 0; s < states; ++s) {
        for (std::size_t a = 0; a < actions; ++a) {
            for (std::size_t t = 0; t < states; ++t) transitions[a](idx(s), idx(t)) = next();
        }
    }
    Eigen::MatrixXd rewards(idx(states), idx(actions));
    for (std::size_t s = 0; s < states; ++s) {
        for (std::size_t a = 0; a < actions; ++a) rewards(idx(s), idx(a)) = next();
    }
    return TabularMDP(std::move(transitions), std::move(rewards), gamma, std::move(initial));
}

TabularMDP random_tabular_mdp(std::size_t states, std::size_t actions, double gamma, Rng& rng) {
    std::vector<Eigen::MatrixXd> transitions(actions, Eigen::MatrixXd(idx(states), idx(states)));
    for (std::size_t a = 0; a < actions; ++a) {
        for (std::size_t s = 0; s < states; ++s) transitions[a].row(idx(s)) = dirichlet_ones(states, rng).transpose();
    }
    Eigen::MatrixXd rewards(idx(states), idx(actions));
    for (Index s = 0; s < rewards.rows(); ++s) {
        for (Index a = 0; a < rewards.cols(); ++a) rewards(s, a) = uniform01(rng);
    }
    const Eigen::VectorXd initial = Eigen::VectorXd::Constant(idx(states), 1.0 / static_cast<double>(states));
    return TabularMDP(std::move(transitions), std::move(rewards), gamma, initial);
}

PolicyMatrix random_policy_matrix(std::size_t states, std::size_t actions, Rng& rng) {
    PolicyMatrix policy(idx(states), idx(actions));
    for (std::size_t s = 0; s < states; ++s) policy.row(idx(s)) = dirichlet_ones(actions, rng).transpose();
    return policy;
}

std::size_t state_index(const StateVector& s) {
    if (s.size() != 1 || s.scalar() < 0.0 || s.scalar() != std::floor(s.scalar())) {
        throw OutOfSupport("tabular state must be a non-negative integer index");
    }
    return static_cast<std::size_t>(s.scalar());
}

namespace {

std::size_t sample_categorical(const double* probabilities, std::size_t n, Rng& rng) {
    const double u = uniform01(rng);
    double cumulative = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (probabilities[i] <= 0.0) continue;
        cumulative += probabilities[i];
        last_positive = i;
        if (u < cumulative) return i;
    }
    return last_positive;
}

} // namespace

std::shared_ptr<const TransitionModel> TabularTransitionModel::with_parameters(const Eigen::VectorXd& phi) const {
    if (phi.size() != 0) throw InvalidInput("TabularTransitionModel has no parameters");
    return std::make_shared<TabularTransitionModel>(mdp_);
}

double TabularTransitionModel::log_density(const StateVector& s, std::size_t a, const StateVector& s_next) const {
    const std::size_t from = state_index(s);
    const std::size_t to = state_index(s_next);
    if (from >= mdp_.num_states() || to >= mdp_.num_states() || a >= mdp_.num_actions()) {
        throw OutOfSupport("tabular index out of range");
    }
    const double p = mdp_.probability(from, a, to);
    if (p <= 0.0) throw OutOfSupport("zero transition probability");
    return std::log(p);
}

StateVector TabularTransitionModel::sample_next(const StateVector& s, std::size_t a, Rng& rng) const {
    const std::size_t from = state_index(s);
    const Eigen::MatrixXd& p = mdp_.transition(a);
    // Row-major walk over one row of a column-major matrix.
    const std::size_t n = mdp_.num_states();
    const double u = uniform01(rng);
    double cumulative = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double prob = p(idx(from), idx(t));
        if (prob <= 0.0) continue;
        cumulative += prob;
        last_positive = t;
        if (u < cumulative) return StateVector(static_cast<double>(t));
    }
    return StateVector(static_cast<double>(last_positive));
}

SoftmaxTabularModel::SoftmaxTabularModel(std::size_t states, std::size_t actions, Eigen::VectorXd logits)
    : states_(states), actions_(actions), logits_(std::move(logits)) {
    if (states == 0 || actions == 0) throw InvalidInput("SoftmaxTabularModel: empty table");
    if (static_cast<std::size_t>(logits_.size()) != states * actions * states) {
        throw InvalidInput("SoftmaxTabularModel: logit count mismatch");
    }
    if (!logits_.allFinite()) throw InvalidInput("SoftmaxTabularModel: non-finite logit");
    probabilities_.resize(logits_.size());
    for (std::size_t row = 0; row < states * actions; ++row) {
        const auto segment = logits_.segment(idx(row * states), idx(states));
        const Eigen::VectorXd e = (segment.array() - segment.maxCoeff()).exp();
        probabilities_.segment(idx(row * states), idx(states)) = e / e.sum();
    }
}

std::shared_ptr<const TransitionModel> SoftmaxTabularModel::with_parameters(const Eigen::VectorXd& phi) const {
    return std::make_shared<SoftmaxTabularModel>(states_, actions_, phi);
}

double SoftmaxTabularModel::probability(std::size_t s, std::size_t a, std::size_t s_next) const {
    return probabilities_[idx(parameter_index(s, a, s_next))];
}

double SoftmaxTabularModel::log_density(const StateVector& s, std::size_t a, const StateVector& s_next) const {
    const std::size_t from = state_index(s);
    const std::size_t to = state_index(s_next);
    if (from >= states_ || to >= states_ || a >= actions_) throw OutOfSupport("tabular index out of range");
    const double p = probability(from, a, to);
    if (p <= 0.0) throw OutOfSupport("zero transition probability");
    return std::log(p);
}

void SoftmaxTabularModel::accumulate_score(const StateVector& s, std::size_t a, const StateVector& s_next,
                                           double weight, std::span<double> grad) const {
    const std::size_t from = state_index(s);
    const std::size_t to = state_index(s_next);
    if (from >= states_ || to >= states_ || a >= actions_) throw OutOfSupport("tabular index out of range");
    const std::size_t base = parameter_index(from, a, 0);
    for (std::size_t k = 0; k < states_; ++k) {
        grad[base + k] += weight * ((k == to ? 1.0 : 0.0) - probabilities_[idx(base + k)]);
    }
}

StateVector SoftmaxTabularModel::sample_next(const StateVector& s, std::size_t a, Rng& rng) const {
    const std::size_t from = state_index(s);
    const std::size_t base = parameter_index(from, a, 0);
    return StateVector(static_cast<double>(sample_categorical(probabilities_.data() + base, states_, rng)));
}

TabularMDP SoftmaxTabularModel::to_mdp(const TabularMDP& base) const {
    if (base.num_states() != states_ || base.num_actions() != actions_) {
        throw InvalidInput("SoftmaxTabularModel::to_mdp: shape mismatch");
    }
    std::vector<Eigen::MatrixXd> transitions(actions_, Eigen::MatrixXd(idx(states_), idx(states_)));
    for (std::size_t s = 0; s < states_; ++s) {
        for (std::size_t a = 0; a < actions_; ++a) {
            for (std::size_t t = 0; t < states_; ++t) transitions[a](idx(s), idx(t)) = probability(s, a, t);
            // Renormalize away rounding so the row-stochastic check holds at 1e-12.
            transitions[a].row(idx(s)) /= transitions[a].row(idx(s)).sum();
        }
    }
    return base.with_transitions(std::move(transitions));
}

Eigen::VectorXd exact_value_gradient(const SoftmaxTabularModel& model, const TabularMDP& base,
                                     const PolicyMatrix& policy) {
    const TabularMDP mdp = model.to_mdp(base);
    const Eigen::VectorXd v = exact_policy_value(mdp, policy);
    const Eigen::MatrixXd occupancy = exact_occupancy(mdp, policy);
    const double scale = mdp.gamma() / (1.0 - mdp.gamma());
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(idx(model.num_parameters()));
    const std::size_t states = model.num_states();
    for (std::size_t s = 0; s < states; ++s) {
        for (std::size_t a = 0; a < model.num_actions(); ++a) {
            double expected_next = 0.0;
            for (std::size_t k = 0; k < states; ++k) expected_next += model.probability(s, a, k) * v[idx(k)];
            for (std::size_t k = 0; k < states; ++k) {
                grad[idx(model.parameter_index(s, a, k))] =
                    scale * occupancy(idx(s), idx(a)) * model.probability(s, a, k) * (v[idx(k)] - expected_next);
            }
        }
    }
    return grad;
}

SoftmaxTabularModel fit_tabular_mle(const OfflineDataset& dataset, std::size_t states, std::size_t actions) {
    std::vector<double> counts(states * actions * states, 0.0);
    for (const Transition& t : dataset.transitions()) {
        const std::size_t s = state_index(t.state);
        const std::size_t n = state_index(t.next_state);
        if (s >= states || n >= states || t.action >= actions) throw InvalidInput("fit_tabular_mle: index out of range");
        counts[(s * actions + t.action) * states + n] += 1.0;
    }
    Eigen::VectorXd logits = Eigen::VectorXd::Zero(idx(counts.size()));
    for (std::size_t row = 0; row < states * actions; ++row) {
        double total = 0.0;
        for (std::size_t k = 0; k < states; ++k) total += counts[row * states + k];
        if (total == 0.0) continue;
        for (std::size_t k = 0; k < states; ++k) {
            const double c = counts[row * states + k];
            logits[idx(row * states + k)] = c > 0.0 ? std::log(c / total) : -30.0;
        }
    }
    return SoftmaxTabularModel(states, actions, std::move(logits));
}

TaskSpec tabular_task(const TabularMDP& mdp) {
    TaskSpec task;
    task.num_actions = mdp.num_actions();
    const Eigen::MatrixXd rewards = mdp.rewards();
    task.reward = [rewards](const StateVector& s, std::size_t a, const StateVector&) {
        return rewards(idx(state_index(s)), idx(a));
    };
    task.is_terminal = [](const StateVector&) { return false; };
    const Eigen::VectorXd initial = mdp.initial();
    task.sample_initial_state = [initial](Rng& rng) {
        return StateVector(static_cast<double>(sample_categorical(initial.data(), static_cast<std::size_t>(initial.size()), rng)));
    };
    return task;
}

TabularPolicy::TabularPolicy(PolicyMatrix matrix) : matrix_(std::move(matrix)) {
    for (Index s = 0; s < matrix_.rows(); ++s) {
        if ((matrix_.row(s).array() < 0.0).any() || std::abs(matrix_.row(s).sum() - 1.0) > kSimplexTolerance) {
            throw InvalidInput("TabularPolicy: row " + std::to_string(s) + " is not a distribution");
        }
    }
}

SimplexVector TabularPolicy::action_distribution(const StateVector& s) const {
    const std::size_t row = state_index(s);
    if (row >= static_cast<std::size_t>(matrix_.rows())) throw OutOfSupport("TabularPolicy: state out of range");
    std::vector<double> w(static_cast<std::size_t>(matrix_.cols()));
    for (std::size_t a = 0; a < w.size(); ++a) w[a] = matrix_(idx(row), idx(a));
    return SimplexVector(std::move(w));
}

OfflineDataset sample_tabular_dataset(const TabularMDP& mdp, std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    const TabularTransitionModel model(mdp);
    std::vector<Transition> transitions;
    transitions.reserve(count);
    const auto states = mdp.num_states();
    const auto actions = mdp.num_actions();
    for (std::size_t i = 0; i < count; ++i) {
        const auto s = std::min(states - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(states)));
        const auto a = std::min(actions - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(actions)));
        Transition t;
        t.state = StateVector(static_cast<double>(s));
        t.action = a;
        t.reward = mdp.rewards()(idx(s), idx(a));
        t.next_state = model.sample_next(t.state, a, rng);
        transitions.push_back(t);
    }
    return OfflineDataset(std::move(transitions), actions, mdp.gamma(), seed);
}

} // namespace moma
