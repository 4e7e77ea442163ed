#pragma once

#include "moma/core.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace moma {

/// Strongly convex function omega on the simplex defining a Bregman distance.
class MirrorMap {
public:
    virtual ~MirrorMap() = default;

    virtual std::string_view name() const = 0;
    virtual double omega(std::span<const double> p) const = 0;
    virtual std::vector<double> gradient(std::span<const double> p) const = 0;
    /// true when the gradient is undefined on the simplex boundary.
    virtual bool requires_interior() const = 0;
    /// Norm for which omega is 1-strongly convex.
    virtual double norm(std::span<const double> x) const = 0;
    /// argmax_p <f, p> - omega(p) / eta when a closed form exists.
    virtual std::optional<SimplexVector> closed_form_update(std::span<const double> f, double eta) const;
};

/// omega(p) = sum p_i log p_i; 1-strongly convex in l1 on the simplex.
class NegativeEntropy final : public MirrorMap {
public:
    std::string_view name() const override { return "negative_entropy"; }
    double omega(std::span<const double> p) const override;
    std::vector<double> gradient(std::span<const double> p) const override;
    bool requires_interior() const override { return true; }
    double norm(std::span<const double> x) const override;
    std::optional<SimplexVector> closed_form_update(std::span<const double> f, double eta) const override;
};

/// omega(p) = 0.5 ||p||_2^2.
class SquaredEuclidean final : public MirrorMap {
public:
    std::string_view name() const override { return "squared_euclidean"; }
    double omega(std::span<const double> p) const override;
    std::vector<double> gradient(std::span<const double> p) const override;
    bool requires_interior() const override { return false; }
    double norm(std::span<const double> x) const override;
    std::optional<SimplexVector> closed_form_update(std::span<const double> f, double eta) const override;
};

/// D(p, q) = omega(q) - omega(p) - <grad omega(p), q - p>.
double bregman_distance(const MirrorMap& map, const SimplexVector& p, const SimplexVector& q);

/// (1 / eta) grad omega(policy_at_s), the offset turning Q into the augmented Q.
std::vector<double> augmented_q_offset(const MirrorMap& map, const SimplexVector& policy_at_s, double eta);

/// <f, p> - omega(p) / eta.
double mirror_objective(const MirrorMap& map, std::span<const double> f, std::span<const double> p, double eta);

struct SimplexSolverOptions {
    double tolerance = 1e-8;
    int max_iterations = 10000;
};

/// Raised when the generic simplex solver misses its tolerance.
class SolverDidNotConverge : public std::runtime_error {
public:
    SolverDidNotConverge(const std::string& what, double residual) : std::runtime_error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// argmax over the simplex of <f, p> - omega(p) / eta by projected gradient ascent,
/// started from `start`, until the unit-step gradient mapping has l2 norm below tolerance.
SimplexVector mirror_update_generic(const MirrorMap& map, std::span<const double> f, const SimplexVector& start,
                                    double eta, const SimplexSolverOptions& options = {});

/// The policy-improvement step: closed form when the map has one, otherwise the generic
/// solver warm-started at the previous policy.
SimplexVector mirror_update(const MirrorMap& map, std::span<const double> f, const SimplexVector& prev_policy_at_s,
                            double eta);

/// softmax(eta * f) with max-subtraction.
SimplexVector softmax(std::span<const double> f, double eta);

} // namespace moma
