#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace moma {

/// Raised when an argument violates an operation's precondition.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using Rng = std::mt19937_64;

/// Uniform draw on [0, 1) using the top 53 bits of one generator output.
double uniform01(Rng& rng);

/// Standard normal draw (Box-Muller on two uniform01 draws; portable across standard libraries).
double standard_normal(Rng& rng);

/// Mixes a seed and a path of indices into an independent stream seed (splitmix64 chain).
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

/// Generator seeded from derive_seed(seed, path).
Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

inline constexpr double kSimplexTolerance = 1e-9;

/// Point in the probability simplex over m actions.
///
/// Construction rejects vectors with negative entries or a sum further than
/// kSimplexTolerance from one; use simplex_project to repair arbitrary input.
class SimplexVector {
public:
    explicit SimplexVector(std::vector<double> weights);

    static SimplexVector uniform(std::size_t m);
    static SimplexVector vertex(std::size_t m, std::size_t index);

    std::size_t size() const noexcept { return weights_.size(); }
    double operator[](std::size_t i) const { return weights_[i]; }
    std::span<const double> weights() const noexcept { return weights_; }
    bool is_interior() const noexcept;

private:
    std::vector<double> weights_;
};

/// Euclidean projection onto the probability simplex.
SimplexVector simplex_project(std::span<const double> raw);

/// Draws index i with probability weights[i].
std::size_t sample_action(const SimplexVector& policy, Rng& rng);

double discounted_return(std::span<const double> rewards, double gamma);

/// Fixed-capacity state vector. All coordinates are finite.
class StateVector {
public:
    static constexpr std::size_t kMaxDim = 4;

    StateVector() = default;
    explicit StateVector(double x);
    StateVector(std::initializer_list<double> coords);
    explicit StateVector(std::span<const double> coords);

    std::size_t size() const noexcept { return dim_; }
    double operator[](std::size_t i) const { return coords_[i]; }
    /// First coordinate; scalar environments use only this.
    double scalar() const noexcept { return coords_[0]; }
    std::span<const double> coords() const noexcept { return {coords_.data(), dim_}; }

    friend bool operator==(const StateVector& a, const StateVector& b) noexcept;

private:
    std::array<double, kMaxDim> coords_{};
    std::size_t dim_ = 0;
};

class DiscreteActionSet {
public:
    explicit DiscreteActionSet(std::vector<std::string> labels);

    std::size_t size() const noexcept { return labels_.size(); }
    const std::string& label(std::size_t index) const { return labels_.at(index); }
    std::size_t index_of(const std::string& label) const;

private:
    std::vector<std::string> labels_;
};

class DiscountConfig {
public:
    explicit DiscountConfig(double gamma);
    double gamma() const noexcept { return gamma_; }
    double effective_horizon() const noexcept { return 1.0 / (1.0 - gamma_); }

private:
    double gamma_;
};

struct Transition {
    StateVector state;
    std::size_t action = 0;
    double reward = 0.0;
    StateVector next_state;
    bool terminal = false;
};

/// Immutable batch of logged transitions sharing one action set.
class OfflineDataset {
public:
    OfflineDataset(std::vector<Transition> transitions, std::size_t num_actions, double gamma,
                   std::uint64_t seed);

    std::span<const Transition> transitions() const noexcept { return transitions_; }
    const Transition& operator[](std::size_t i) const { return transitions_[i]; }
    std::size_t size() const noexcept { return transitions_.size(); }
    std::size_t num_actions() const noexcept { return num_actions_; }
    std::size_t state_dim() const noexcept { return transitions_.front().state.size(); }
    double gamma() const noexcept { return gamma_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::vector<std::size_t> action_counts() const;

private:
    std::vector<Transition> transitions_;
    std::size_t num_actions_;
    double gamma_;
    std::uint64_t seed_;
};

/// CSV with header `s,a,r,s_next,terminal`, preceded by `#key=value` metadata lines.
/// Multi-dimensional states are semicolon-joined inside one field.
void write_dataset_csv(const OfflineDataset& dataset, std::ostream& out);
OfflineDataset read_dataset_csv(std::istream& in);

/// Formats with 17 significant digits.
std::string format_real(double value);

/// Stochastic policy over a discrete action set.
class Policy {
public:
    virtual ~Policy() = default;
    virtual std::size_t num_actions() const = 0;
    virtual SimplexVector action_distribution(const StateVector& s) const = 0;
};

/// State-independent action distribution (uniform policy, behavior policy).
class FixedPolicy final : public Policy {
public:
    explicit FixedPolicy(SimplexVector weights) : weights_(std::move(weights)) {}
    std::size_t num_actions() const override { return weights_.size(); }
    SimplexVector action_distribution(const StateVector&) const override { return weights_; }

private:
    SimplexVector weights_;
};

/// What the learner knows about the environment besides its dynamics:
/// the reward function, the terminal predicate, and the initial-state distribution.
struct TaskSpec {
    std::size_t num_actions = 0;
    std::function<double(const StateVector& s, std::size_t a, const StateVector& s_next)> reward;
    std::function<bool(const StateVector& s)> is_terminal;
    std::function<StateVector(Rng& rng)> sample_initial_state;
};

} // namespace moma
