#pragma once

#include "moma/dynamics.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <vector>

namespace moma {

/// Row-major policy matrix: entry (s, a) = pi(a | s).
using PolicyMatrix = Eigen::MatrixXd;

/// Finite MDP with an exact transition tensor, used as ground truth.
class TabularMDP {
public:
    /// transitions[a] is an S x S row-stochastic matrix; rewards is S x A.
    TabularMDP(std::vector<Eigen::MatrixXd> transitions, Eigen::MatrixXd rewards, double gamma,
               Eigen::VectorXd initial);

    std::size_t num_states() const noexcept { return static_cast<std::size_t>(rewards_.rows()); }
    std::size_t num_actions() const noexcept { return transitions_.size(); }
    double gamma() const noexcept { return gamma_; }
    const Eigen::MatrixXd& transition(std::size_t a) const { return transitions_.at(a); }
    double probability(std::size_t s, std::size_t a, std::size_t s_next) const {
        return transitions_[a](static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s_next));
    }
    const Eigen::MatrixXd& rewards() const noexcept { return rewards_; }
    const Eigen::VectorXd& initial() const noexcept { return initial_; }

    TabularMDP with_transitions(std::vector<Eigen::MatrixXd> transitions) const;

    /// P^pi and r^pi under a stochastic policy.
    Eigen::MatrixXd policy_transition(const PolicyMatrix& policy) const;
    Eigen::VectorXd policy_reward(const PolicyMatrix& policy) const;

private:
    std::vector<Eigen::MatrixXd> transitions_;
    Eigen::MatrixXd rewards_;
    double gamma_;
    Eigen::VectorXd initial_;
};

void validate_policy_matrix(const TabularMDP& mdp, const PolicyMatrix& policy);

/// Solves (I - gamma P^pi) V = r^pi.
Eigen::VectorXd exact_policy_value(const TabularMDP& mdp, const PolicyMatrix& policy);
/// Initial-distribution-weighted value.
double exact_initial_value(const TabularMDP& mdp, const PolicyMatrix& policy);
Eigen::MatrixXd exact_q(const TabularMDP& mdp, const PolicyMatrix& policy);
/// d(s, a) = (1 - gamma) sum_t gamma^t Pr(s_t = s, a_t = a), as an S x A matrix.
Eigen::MatrixXd exact_occupancy(const TabularMDP& mdp, const PolicyMatrix& policy);

struct SimulationLemmaResult {
    double lhs = 0.0;
    double rhs = 0.0;
    double tv_bound = 0.0;
};

/// Both sides of the value-difference identity between two models sharing rewards,
/// discount and initial distribution, plus the total-variation bound on |lhs|.
SimulationLemmaResult simulation_lemma_check(const TabularMDP& p, const TabularMDP& p_hat, const PolicyMatrix& policy);

/// max over (s, a) of d^pi(s, a) / rho(s, a); +infinity when an occupied pair has rho = 0.
double concentrability(const TabularMDP& mdp, const PolicyMatrix& target_policy, const Eigen::MatrixXd& offline);

struct ValueIterationResult {
    Eigen::VectorXd values;
    PolicyMatrix greedy_policy;
    int iterations = 0;
};

/// Optimal values; stops when the sup-norm change falls below tolerance.
ValueIterationResult value_iteration(const TabularMDP& mdp, double tolerance = 1e-12, int max_iterations = 100000);

/// Plain-text instance: `states actions`, `gamma`, initial distribution (S numbers),
/// then S*A rows of P[s][a][.] ordered by s then a, then S rows of r[s][.]. `#` starts a comment.
TabularMDP parse_tabular_mdp(std::istream& in);

/// Dirichlet(1)-style random instance with uniform initial distribution.
TabularMDP random_tabular_mdp(std::size_t states, std::size_t actions, double gamma, Rng& rng);

/// Random policy matrix with strictly positive rows.
PolicyMatrix random_policy_matrix(std::size_t states, std::size_t actions, Rng& rng);

/// States of tabular environments are scalar indices.
std::size_t state_index(const StateVector& s);

/// Fixed tabular transition model (no free parameters).
class TabularTransitionModel final : public TransitionModel {
public:
    explicit TabularTransitionModel(TabularMDP mdp) : mdp_(std::move(mdp)) {}

    const TabularMDP& mdp() const noexcept { return mdp_; }
    std::size_t num_actions() const override { return mdp_.num_actions(); }
    std::size_t num_parameters() const override { return 0; }
    Eigen::VectorXd parameters() const override { return {}; }
    std::shared_ptr<const TransitionModel> with_parameters(const Eigen::VectorXd& phi) const override;
    double log_density(const StateVector& s, std::size_t a, const StateVector& s_next) const override;
    void accumulate_score(const StateVector&, std::size_t, const StateVector&, double, std::span<double>) const override {}
    StateVector sample_next(const StateVector& s, std::size_t a, Rng& rng) const override;

private:
    TabularMDP mdp_;
};

/// Tabular transitions with softmax-parameterized rows: P(s' | s, a) = softmax(logits[s, a, .])_{s'}.
/// Parameter layout: index (s * A + a) * S + s'.
class SoftmaxTabularModel final : public TransitionModel {
public:
    SoftmaxTabularModel(std::size_t states, std::size_t actions, Eigen::VectorXd logits);

    std::size_t num_states() const noexcept { return states_; }
    std::size_t num_actions() const override { return actions_; }
    std::size_t num_parameters() const override { return static_cast<std::size_t>(logits_.size()); }
    Eigen::VectorXd parameters() const override { return logits_; }
    std::shared_ptr<const TransitionModel> with_parameters(const Eigen::VectorXd& phi) const override;
    double log_density(const StateVector& s, std::size_t a, const StateVector& s_next) const override;
    void accumulate_score(const StateVector& s, std::size_t a, const StateVector& s_next, double weight,
                          std::span<double> grad) const override;
    StateVector sample_next(const StateVector& s, std::size_t a, Rng& rng) const override;

    double probability(std::size_t s, std::size_t a, std::size_t s_next) const;
    std::size_t parameter_index(std::size_t s, std::size_t a, std::size_t s_next) const {
        return (s * actions_ + a) * states_ + s_next;
    }
    /// The MDP obtained by pairing these transitions with `base`'s rewards, discount and initial distribution.
    TabularMDP to_mdp(const TabularMDP& base) const;

private:
    std::size_t states_;
    std::size_t actions_;
    Eigen::VectorXd logits_;
    Eigen::VectorXd probabilities_;
};

/// Exact gradient of the initial-distribution-weighted value with respect to the logits,
/// through the occupancy measure: (gamma / (1 - gamma)) d(s, a) P(k | s, a) (V(k) - E_P V).
Eigen::VectorXd exact_value_gradient(const SoftmaxTabularModel& model, const TabularMDP& base,
                                     const PolicyMatrix& policy);

/// Count-based MLE with softmax rows; rows without data are uniform,
/// unobserved successors get logit -30.
SoftmaxTabularModel fit_tabular_mle(const OfflineDataset& dataset, std::size_t states, std::size_t actions);

/// Reward r[s][a], no terminal states, initial states drawn from mdp.initial().
TaskSpec tabular_task(const TabularMDP& mdp);

class TabularPolicy final : public Policy {
public:
    explicit TabularPolicy(PolicyMatrix matrix);
    std::size_t num_actions() const override { return static_cast<std::size_t>(matrix_.cols()); }
    SimplexVector action_distribution(const StateVector& s) const override;
    const PolicyMatrix& matrix() const noexcept { return matrix_; }

private:
    PolicyMatrix matrix_;
};

/// Transitions with (s, a) uniform over the table and s' ~ P(. | s, a).
OfflineDataset sample_tabular_dataset(const TabularMDP& mdp, std::size_t count, std::uint64_t seed);

} // namespace moma
