#pragma once

#include "moma/core.hpp"
#include "moma/mirror.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <memory>
#include <string_view>
#include <variant>
#include <vector>

namespace moma {

/// Radial exponential features exp(-(s - c_k)^2 / l^2) of the first state coordinate,
/// optionally followed by a constant bias feature.
class RbfFeatures {
public:
    RbfFeatures(std::vector<double> centers, double lengthscale, bool bias);

    /// 11 evenly spaced centers over [-4, 4], lengthscale 1, with bias.
    static std::shared_ptr<const RbfFeatures> default_grid();

    std::size_t size() const noexcept { return centers_.size() + (bias_ ? 1 : 0); }
    const std::vector<double>& centers() const noexcept { return centers_; }
    double lengthscale() const noexcept { return lengthscale_; }
    bool bias() const noexcept { return bias_; }
    void evaluate(const StateVector& s, std::span<double> out) const;

private:
    std::vector<double> centers_;
    double lengthscale_;
    bool bias_;
};

/// Parametric scalar function of the state, f(s; beta).
class FunctionApproximator {
public:
    virtual ~FunctionApproximator() = default;
    virtual std::string_view family() const = 0;
    virtual double evaluate(const StateVector& s) const = 0;
    virtual void write(std::ostream& out) const = 0;
};

class LinearApproximator final : public FunctionApproximator {
public:
    LinearApproximator(std::shared_ptr<const RbfFeatures> features, Eigen::VectorXd beta);

    std::string_view family() const override { return "linear"; }
    double evaluate(const StateVector& s) const override;
    void write(std::ostream& out) const override;

    const std::shared_ptr<const RbfFeatures>& features() const noexcept { return features_; }
    const Eigen::VectorXd& beta() const noexcept { return beta_; }

private:
    std::shared_ptr<const RbfFeatures> features_;
    Eigen::VectorXd beta_;
};

/// One hidden tanh layer on standardized inputs, linear output rescaled to target units.
class FeedforwardApproximator final : public FunctionApproximator {
public:
    struct Weights {
        Eigen::VectorXd input_mean;
        Eigen::VectorXd input_scale;
        Eigen::MatrixXd hidden_weights; // hidden x input
        Eigen::VectorXd hidden_bias;
        Eigen::VectorXd output_weights;
        double output_bias = 0.0;
        double target_mean = 0.0;
        double target_scale = 1.0;
    };

    explicit FeedforwardApproximator(Weights weights);

    std::string_view family() const override { return "feedforward"; }
    double evaluate(const StateVector& s) const override;
    void write(std::ostream& out) const override;
    const Weights& weights() const noexcept { return weights_; }

private:
    Weights weights_;
};

/// A regression target for one (state, action): an augmented action-value estimate or any other value.
struct AugmentedQSample {
    StateVector state;
    std::size_t action = 0;
    double value = 0.0;
};

struct LinearFamilyConfig {
    std::shared_ptr<const RbfFeatures> features = RbfFeatures::default_grid();
    double ridge = 1e-8;
};

struct FeedforwardFamilyConfig {
    std::size_t hidden = 32;
    int max_epochs = 200;
    double learning_rate = 0.01;
    double tolerance = 1e-8;
    std::uint64_t seed = 0;
};

using FamilyConfig = std::variant<LinearFamilyConfig, FeedforwardFamilyConfig>;

struct FitResult {
    std::shared_ptr<const FunctionApproximator> approximator;
    double training_mse = 0.0;
    bool ridge_fallback = false;
    int epochs = 0;
};

/// Least-squares fit of one action's targets. Linear family: exact least squares
/// (pivoted QR), falling back to ridge when the design is rank deficient.
/// Feedforward family: full-batch Adam until the MSE improvement drops below tolerance.
FitResult fit_approximator(std::span<const AugmentedQSample> samples, const FamilyConfig& family);

/// Feedforward fit continuing from `warm_start` instead of a fresh initialization.
FitResult fit_feedforward(std::span<const AugmentedQSample> samples, const FeedforwardFamilyConfig& config,
                          const FeedforwardApproximator* warm_start);

/// pi(A_i | s) proportional to exp(eta f_i(s)).
class SoftmaxFunctionalPolicy final : public Policy {
public:
    SoftmaxFunctionalPolicy(std::vector<std::shared_ptr<const FunctionApproximator>> approximators, double eta);

    /// All-zero linear approximators: the uniform policy.
    static SoftmaxFunctionalPolicy uniform(std::size_t num_actions, std::shared_ptr<const RbfFeatures> features,
                                           double eta);

    std::size_t num_actions() const override { return approximators_.size(); }
    SimplexVector action_distribution(const StateVector& s) const override;
    std::vector<double> scores(const StateVector& s) const;

    double eta() const noexcept { return eta_; }
    const std::vector<std::shared_ptr<const FunctionApproximator>>& approximators() const noexcept {
        return approximators_;
    }

private:
    std::vector<std::shared_ptr<const FunctionApproximator>> approximators_;
    double eta_;
    // Fast path when every approximator is linear over one shared feature map.
    std::shared_ptr<const RbfFeatures> shared_features_;
    Eigen::MatrixXd shared_betas_; // actions x features
};

SimplexVector policy_evaluate(const SoftmaxFunctionalPolicy& policy, const StateVector& s);

/// Deterministic argmax over per-action value approximators (ties to the lowest index).
class GreedyQPolicy final : public Policy {
public:
    explicit GreedyQPolicy(std::vector<std::shared_ptr<const FunctionApproximator>> q_functions);

    std::size_t num_actions() const override { return q_functions_.size(); }
    SimplexVector action_distribution(const StateVector& s) const override;
    std::vector<double> values(const StateVector& s) const;
    const std::vector<std::shared_ptr<const FunctionApproximator>>& q_functions() const noexcept {
        return q_functions_;
    }

private:
    std::vector<std::shared_ptr<const FunctionApproximator>> q_functions_;
};

/// A checkpointed policy: one member, or several for the uniform mixture over iterates
/// (a member is drawn per episode).
struct PolicyCheckpoint {
    std::vector<std::shared_ptr<const Policy>> members;
};

/// Flat text format; reals are written with 17 significant digits so reloading is bit-exact.
void write_policy_checkpoint(std::ostream& out, std::span<const std::shared_ptr<const Policy>> members);
PolicyCheckpoint read_policy_checkpoint(std::istream& in);

} // namespace moma
