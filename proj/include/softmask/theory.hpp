#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "softmask/numerics.hpp"
#include "softmask/optim.hpp"
#include "softmask/regularizers.hpp"

namespace softmask {

// ---------------------------------------------------------------------------
// Planted strongly convex instances
// ---------------------------------------------------------------------------

/// Quadratic loss L(m) = (gamma/2)||m - m_bar||^2 + g'(m - m_bar) with a
/// binary planted mask m_bar of support size k and ||g||_inf <= lambda, so
/// both the strong-convexity premise and the gradient premise hold by
/// construction.
struct PlantedInstance {
    std::size_t dim = 0;
    std::size_t support_size = 0;
    Vec m_bar;
    double gamma = 1.0;
    double lambda = 0.0;
    Vec grad_at_mbar;

    double loss(const Vec& m) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            const double h = m[i] - m_bar[i];
            acc += 0.5 * gamma * h * h + grad_at_mbar[i] * h;
        }
        return acc;
    }

    Vec loss_grad(const Vec& m) const {
        Vec g(dim);
        for (std::size_t i = 0; i < dim; ++i)
            g[i] = gamma * (m[i] - m_bar[i]) + grad_at_mbar[i];
        return g;
    }

    /// Per-coordinate loss restricted to coordinate i, used by grid search.
    double coord_loss(std::size_t i, double v) const {
        const double h = v - m_bar[i];
        return 0.5 * gamma * h * h + grad_at_mbar[i] * h;
    }
};

inline PlantedInstance make_planted(std::size_t d, std::size_t k, double gamma, double lambda,
                                    SeededRng& rng) {
    if (k < 1 || k > d)
        throw std::invalid_argument("make_planted: support size " + std::to_string(k) +
                                    " outside [1," + std::to_string(d) + "]");
    if (!(gamma > 0.0)) throw std::invalid_argument("make_planted: gamma must be positive");
    if (!(lambda > 0.0)) throw std::invalid_argument("make_planted: lambda must be positive");
    PlantedInstance inst;
    inst.dim = d;
    inst.support_size = k;
    inst.gamma = gamma;
    inst.lambda = lambda;
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(idx);
    inst.m_bar.assign(d, 0.0);
    for (std::size_t j = 0; j < k; ++j) inst.m_bar[idx[j]] = 1.0;
    inst.grad_at_mbar.resize(d);
    for (std::size_t i = 0; i < d; ++i) inst.grad_at_mbar[i] = rng.uniform(-lambda, lambda);
    return inst;
}

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

/// Exact minimizer of L(m) + lambda*||m||_1 over the box: the objective is
/// separable and convex, so each coordinate is the clamped stationary point
/// m_i = clamp(m_bar_i - (g_i + lambda)/gamma). On [0,1], |m| = m.
inline Vec solve_relaxed_l1_closed_form(const PlantedInstance& inst, double lambda) {
    Vec m(inst.dim);
    for (std::size_t i = 0; i < inst.dim; ++i)
        m[i] = clamp_unit(inst.m_bar[i] - (inst.grad_at_mbar[i] + lambda) / inst.gamma);
    return m;
}

/// Exhaustive minimum of L + lambda*R over the grid {0, q, 2q, ..., 1}^d.
/// Planted losses and the separable regularizer family are both coordinate
/// separable, so the product-grid optimum is found by scanning each
/// coordinate's grid independently; the result is identical to full
/// enumeration at (1/q+1)^d cost. Ties go to the smaller grid value.
inline Vec solve_relaxed_grid(const PlantedInstance& inst, const RegularizerSpec& reg,
                              double q) {
    if (!(q > 0.0 && q <= 0.5))
        throw std::invalid_argument("solve_relaxed_grid: step must lie in (0, 0.5]");
    const double steps_real = 1.0 / q;
    const auto steps = static_cast<std::size_t>(std::llround(steps_real));
    if (std::abs(steps_real - static_cast<double>(steps)) > 1e-9)
        throw std::invalid_argument("solve_relaxed_grid: step " + std::to_string(q) +
                                    " does not divide 1 evenly");
    const double lambda = reg.lambda();
    Vec best(inst.dim, 0.0);
    for (std::size_t i = 0; i < inst.dim; ++i) {
        double best_val = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t <= steps; ++t) {
            const double v = t == steps ? 1.0 : std::min(1.0, static_cast<double>(t) * q);
            const double obj = inst.coord_loss(i, v) + lambda * reg_scalar(reg, v);
            if (obj < best_val) {
                best_val = obj;
                best[i] = v;
            }
        }
    }
    return best;
}

/// Projected gradient descent on the planted objective; the same update rule
/// as the mask branch of the trainers.
inline Vec solve_relaxed_pgd(const PlantedInstance& inst, const RegularizerSpec& reg,
                             Vec start, double step, std::size_t max_iters, double tol) {
    auto grad = [&inst](const Vec& m) { return inst.loss_grad(m); };
    return pgd_box(grad, std::move(start), reg, step, max_iters, tol).m;
}

inline Vec solve_relaxed_pgd(const PlantedInstance& inst, const RegularizerSpec& reg) {
    // Safe step for a gamma-strongly-convex quadratic with gamma-Lipschitz
    // gradient; start from the algorithm's mask initialization.
    return solve_relaxed_pgd(inst, reg, Vec(inst.dim, 0.5), 1.0 / inst.gamma, 200000, 1e-12);
}

// ---------------------------------------------------------------------------
// Certification of the error bounds
// ---------------------------------------------------------------------------

constexpr double kVerdictSlack = 1e-9;

/// Measured error and bound arithmetic for one solved instance. sharpened_bound
/// keeps the stated form bound1 - phi even where its constant is suspect;
/// the raw quantities are all retained so the relationship can be inspected.
struct BoundCertificate {
    double lambda = 0.0;
    std::size_t k = 0;
    double gamma = 0.0;
    double err_l2 = 0.0;       // ||m* - m_bar||_2
    double base_bound = 0.0;   // 4*lambda*sqrt(k)/gamma
    double phi = 0.0;          // R(m*) - ||m*||_1
    double sharpened_bound = 0.0;   // base_bound - phi
    bool premise_holds = false;     // ||grad L(m_bar)||_inf <= lambda
    bool base_bound_holds = false;
    bool sharpened_applicable = false;   // strictly concave regularizer
    bool sharpened_bound_holds = false;
    bool uniqueness_applicable = false;  // (4*sqrt(k)/gamma)*lambda < 1 and m* binary
    bool uniqueness_holds = false;       // m* equals m_bar
    bool m_star_binary = false;
};

inline BoundCertificate certify(const PlantedInstance& inst, const RegularizerSpec& reg,
                                const Vec& m_star) {
    if (m_star.size() != inst.dim)
        throw std::invalid_argument("certify: solution length " + std::to_string(m_star.size()) +
                                    " vs instance dimension " + std::to_string(inst.dim));
    for (double v : m_star)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("certify: infeasible solution entry " +
                                        std::to_string(v));

    BoundCertificate cert;
    cert.lambda = reg.lambda();
    cert.k = inst.support_size;
    cert.gamma = inst.gamma;

    Vec h(inst.dim);
    for (std::size_t i = 0; i < inst.dim; ++i) h[i] = m_star[i] - inst.m_bar[i];
    cert.err_l2 = norm_l2(h);
    cert.base_bound =
        4.0 * cert.lambda * std::sqrt(static_cast<double>(cert.k)) / cert.gamma;
    cert.phi = phi_gap(reg, m_star);
    cert.sharpened_bound = cert.base_bound - cert.phi;

    cert.premise_holds = norm_inf(inst.grad_at_mbar) <= cert.lambda;
    cert.base_bound_holds = cert.err_l2 <= cert.base_bound + kVerdictSlack;
    cert.sharpened_applicable = reg.kind() == RegKind::Log;
    cert.sharpened_bound_holds = cert.sharpened_applicable && cert.err_l2 <= cert.sharpened_bound + kVerdictSlack;

    cert.m_star_binary = true;
    bool equals_mbar = true;
    for (std::size_t i = 0; i < inst.dim; ++i) {
        const double r = std::round(m_star[i]);
        if (std::abs(m_star[i] - r) > kVerdictSlack) cert.m_star_binary = false;
        if (r != inst.m_bar[i]) equals_mbar = false;
    }
    cert.uniqueness_applicable =
        (4.0 * std::sqrt(static_cast<double>(cert.k)) / cert.gamma) * cert.lambda < 1.0 &&
        cert.m_star_binary;
    cert.uniqueness_holds = cert.uniqueness_applicable && cert.m_star_binary && equals_mbar;
    return cert;
}

}  // namespace softmask
