#include "moma/mirror.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace moma {

namespace {

void require_interior(const MirrorMap& map, std::span<const double> p, const char* what) {
    if (!map.requires_interior()) return;
    for (double v : p) {
        if (!(v > 0.0)) throw InvalidInput(std::string(what) + ": gradient of " + std::string(map.name()) +
                                           " is undefined on the simplex boundary");
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

} // namespace

std::optional<SimplexVector> MirrorMap::closed_form_update(std::span<const double>, double) const {
    return std::nullopt;
}

double NegativeEntropy::omega(std::span<const double> p) const {
    double total = 0.0;
    for (double v : p) {
        if (v > 0.0) total += v * std::log(v);
    }
    return total;
}

std::vector<double> NegativeEntropy::gradient(std::span<const double> p) const {
    std::vector<double> g(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) g[i] = std::log(p[i]) + 1.0;
    return g;
}

double NegativeEntropy::norm(std::span<const double> x) const {
    double total = 0.0;
    for (double v : x) total += std::abs(v);
    return total;
}

std::optional<SimplexVector> NegativeEntropy::closed_form_update(std::span<const double> f, double eta) const {
    return softmax(f, eta);
}

double SquaredEuclidean::omega(std::span<const double> p) const {
    return 0.5 * dot(p, p);
}

std::vector<double> SquaredEuclidean::gradient(std::span<const double> p) const {
    return {p.begin(), p.end()};
}

double SquaredEuclidean::norm(std::span<const double> x) const {
    return std::sqrt(dot(x, x));
}

std::optional<SimplexVector> SquaredEuclidean::closed_form_update(std::span<const double> f, double eta) const {
    std::vector<double> scaled(f.begin(), f.end());
    for (double& v : scaled) v *= eta;
    return simplex_project(scaled);
}

double bregman_distance(const MirrorMap& map, const SimplexVector& p, const SimplexVector& q) {
    if (p.size() != q.size()) throw InvalidInput("bregman_distance: size mismatch");
    require_interior(map, p.weights(), "bregman_distance");
    const auto grad = map.gradient(p.weights());
    double linear = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) linear += grad[i] * (q[i] - p[i]);
    return map.omega(q.weights()) - map.omega(p.weights()) - linear;
}

std::vector<double> augmented_q_offset(const MirrorMap& map, const SimplexVector& policy_at_s, double eta) {
    if (!(eta > 0.0)) throw InvalidInput("augmented_q_offset: eta must be positive");
    require_interior(map, policy_at_s.weights(), "augmented_q_offset");
    auto offset = map.gradient(policy_at_s.weights());
    for (double& v : offset) v /= eta;
    return offset;
}

double mirror_objective(const MirrorMap& map, std::span<const double> f, std::span<const double> p, double eta) {
    return dot(f, p) - map.omega(p) / eta;
}

SimplexVector softmax(std::span<const double> f, double eta) {
    if (f.empty()) throw InvalidInput("softmax: empty input");
    const double top = *std::max_element(f.begin(), f.end());
    std::vector<double> w(f.size());
    double total = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        w[i] = std::exp(eta * (f[i] - top));
        total += w[i];
    }
    for (double& v : w) v /= total;
    return SimplexVector(std::move(w));
}

SimplexVector mirror_update_generic(const MirrorMap& map, std::span<const double> f, const SimplexVector& start,
                                    double eta, const SimplexSolverOptions& options) {
    if (!(eta > 0.0)) throw InvalidInput("mirror_update: eta must be positive");
    if (f.size() != start.size()) throw InvalidInput("mirror_update: size mismatch");
    const std::size_t m = f.size();

    auto ascent_direction = [&](std::span<const double> p) {
        auto g = map.gradient(p);
        for (std::size_t i = 0; i < m; ++i) g[i] = f[i] - g[i] / eta;
        return g;
    };
    auto objective = [&](std::span<const double> p) { return mirror_objective(map, f, p, eta); };
    auto step_to = [&](std::span<const double> p, std::span<const double> g, double t) {
        std::vector<double> raw(m);
        for (std::size_t i = 0; i < m; ++i) raw[i] = p[i] + t * g[i];
        const SimplexVector projected = simplex_project(raw);
        return std::vector<double>(projected.weights().begin(), projected.weights().end());
    };

    std::vector<double> p(start.weights().begin(), start.weights().end());
    if (map.requires_interior() && !start.is_interior()) {
        for (double& v : p) v = 0.5 * v + 0.5 / static_cast<double>(m);
    }
    std::vector<double> g = ascent_direction(p);
    double step = 1.0;
    double residual = INFINITY;

    for (int it = 0; it < options.max_iterations; ++it) {
        const auto unit = step_to(p, g, 1.0);
        residual = 0.0;
        for (std::size_t i = 0; i < m; ++i) residual += (unit[i] - p[i]) * (unit[i] - p[i]);
        residual = std::sqrt(residual);
        if (residual < options.tolerance) return SimplexVector(p);

        const double current = objective(p);
        std::vector<double> next;
        while (true) {
            next = step_to(p, g, step);
            const bool feasible = !map.requires_interior() ||
                                  std::all_of(next.begin(), next.end(), [](double v) { return v > 0.0; });
            if (feasible) {
                double linear = 0.0;
                double sq = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    linear += g[i] * (next[i] - p[i]);
                    sq += (next[i] - p[i]) * (next[i] - p[i]);
                }
                if (objective(next) >= current + linear - sq / (2.0 * step) - 1e-15 * std::abs(current)) break;
            }
            step *= 0.5;
            if (step < 1e-300) throw SolverDidNotConverge("mirror_update: line search failed", residual);
        }

        // Barzilai-Borwein step for the next iteration.
        const std::vector<double> g_next = ascent_direction(next);
        double ss = 0.0;
        double sy = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double s = next[i] - p[i];
            ss += s * s;
            sy += s * (g[i] - g_next[i]);
        }
        step = (sy > 0.0 && ss > 0.0) ? std::clamp(ss / sy, 1e-12, 1e12) : std::min(2.0 * step, 1e12);
        p = std::move(next);
        g = g_next;
    }
    throw SolverDidNotConverge("mirror_update: no convergence within iteration budget (residual " +
                                   format_real(residual) + ")",
                               residual);
}

SimplexVector mirror_update(const MirrorMap& map, std::span<const double> f, const SimplexVector& prev_policy_at_s,
                            double eta) {
    if (!(eta > 0.0)) throw InvalidInput("mirror_update: eta must be positive");
    if (auto closed = map.closed_form_update(f, eta)) return *closed;
    return mirror_update_generic(map, f, prev_policy_at_s, eta);
}

} // namespace moma
