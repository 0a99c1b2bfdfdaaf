#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "softmask/numerics.hpp"

namespace softmask {

enum class RegKind { L1, Log };

constexpr double kDefaultEpsilon = 0.1;
constexpr double kDefaultLambdaL1 = 3e-6;
constexpr double kDefaultLambdaLog = 1e-6;

/// Separable concave mask regularizer R(m) = sum_i r(m_i) with r concave,
/// non-decreasing, r(0) = 0 and r(1) = 1 on [0,1].
///   L1:  r(t) = t
///   Log: r(t) = log((t + eps) / eps) / log((1 + eps) / eps)
class RegularizerSpec {
public:
    static RegularizerSpec l1(double lambda = kDefaultLambdaL1) {
        return RegularizerSpec(RegKind::L1, 0.0, lambda);
    }

    static RegularizerSpec log(double epsilon = kDefaultEpsilon,
                               double lambda = kDefaultLambdaLog) {
        if (!(epsilon > 0.0))
            throw std::invalid_argument("RegularizerSpec: epsilon must be positive, got " +
                                        std::to_string(epsilon));
        return RegularizerSpec(RegKind::Log, epsilon, lambda);
    }

    RegKind kind() const { return kind_; }
    double epsilon() const { return epsilon_; }
    double lambda() const { return lambda_; }

    RegularizerSpec with_lambda(double lambda) const {
        return RegularizerSpec(kind_, epsilon_, lambda);
    }

    std::string name() const { return kind_ == RegKind::L1 ? "l1" : "log"; }

private:
    RegularizerSpec(RegKind kind, double epsilon, double lambda)
        : kind_(kind), epsilon_(epsilon), lambda_(lambda) {
        if (!(lambda >= 0.0))
            throw std::invalid_argument("RegularizerSpec: lambda must be nonnegative, got " +
                                        std::to_string(lambda));
    }

    RegKind kind_;
    double epsilon_;
    double lambda_;
};

namespace detail {
inline void check_mask_range(double m) {
    if (!(m >= 0.0 && m <= 1.0))
        throw std::invalid_argument("regularizer: mask value " + std::to_string(m) +
                                    " outside [0,1]; clamp before evaluating");
}
}  // namespace detail

/// r(m_i), maps [0,1] onto [0,1].
inline double reg_scalar(const RegularizerSpec& spec, double m) {
    detail::check_mask_range(m);
    if (spec.kind() == RegKind::L1) return m;
    const double e = spec.epsilon();
    return std::log((m + e) / e) / std::log((1.0 + e) / e);
}

/// dr/dm. At the endpoints the one-sided derivative (same closed form) is
/// returned; it is finite for Log since m + eps > 0.
inline double reg_scalar_grad(const RegularizerSpec& spec, double m) {
    detail::check_mask_range(m);
    if (spec.kind() == RegKind::L1) return 1.0;
    const double e = spec.epsilon();
    return 1.0 / ((m + e) * std::log((1.0 + e) / e));
}

/// R(m) = sum_i r(m_i); lies in [0, d].
inline double reg_value(const RegularizerSpec& spec, const Vec& m) {
    double acc = 0.0;
    for (double v : m) acc += reg_scalar(spec, v);
    return acc;
}

inline Vec reg_grad(const RegularizerSpec& spec, const Vec& m) {
    Vec g(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) g[i] = reg_scalar_grad(spec, m[i]);
    return g;
}

/// phi(m) = R(m) - ||m||_1 >= 0; zero for binary m and for the L1 kind.
inline double phi_gap(const RegularizerSpec& spec, const Vec& m) {
    double acc = 0.0;
    for (double v : m) acc += reg_scalar(spec, v) - v;
    return acc < 0.0 ? 0.0 : acc;
}

}  // namespace softmask
