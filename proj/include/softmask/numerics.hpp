#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace softmask {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Dense row-major matrix
// ---------------------------------------------------------------------------

class DenseMatrix {
public:
    DenseMatrix() = default;

    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    DenseMatrix(std::size_t rows, std::size_t cols, Vec entries)
        : rows_(rows), cols_(cols), data_(std::move(entries)) {
        if (data_.size() != rows_ * cols_)
            throw std::invalid_argument("DenseMatrix: " + std::to_string(data_.size()) +
                                        " entries do not fill shape " + shape_str());
    }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }

    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

    const Vec& entries() const { return data_; }
    Vec& entries() { return data_; }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(),
                           [](double v) { return std::isfinite(v); });
    }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vec data_;
};

inline Vec matvec(const DenseMatrix& a, const Vec& v) {
    if (v.size() != a.cols())
        throw std::invalid_argument("matvec: matrix is " + a.shape_str() +
                                    " but vector has length " + std::to_string(v.size()));
    Vec out(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto r = a.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) acc += r[j] * v[j];
        out[i] = acc;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Projection onto [0,1]
// ---------------------------------------------------------------------------

inline double clamp_unit(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("clamp_box: non-finite input");
    return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
}

inline Vec clamp_box(const Vec& v) {
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = clamp_unit(v[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Central finite differences
// ---------------------------------------------------------------------------

constexpr double kDefaultFdStep = 1e-5;

inline Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x,
                            double h = kDefaultFdStep) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
    Vec grad(x.size(), 0.0);
    Vec probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double fp = f(probe);
        probe[i] = x[i] - h;
        const double fm = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_grad: non-finite value near coordinate " +
                                     std::to_string(i));
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

// ---------------------------------------------------------------------------
// SplitMix64 pseudo-random stream
// ---------------------------------------------------------------------------

/// Deterministic generator (SplitMix64). The 64-bit stream is bit-exact across
/// platforms; uniform doubles are derived with exact binary arithmetic only.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal, Box-Muller; consumes two uniforms per call.
    double normal() {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        const double v = uniform();
        return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586477 * v);
    }

    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n) {
        if (n == 0) throw std::invalid_argument("SeededRng::below: empty range");
        return static_cast<std::size_t>(next_u64() % n);
    }

    /// Fisher-Yates shuffle driven by this stream.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i)
            std::swap(items[i - 1], items[below(i)]);
    }

    /// Derive the seed of an independent sub-stream (per epoch, per worker).
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        SeededRng r(seed ^ (0x632be59bd9b4e019ULL * (stream + 1)));
        return r.next_u64();
    }

private:
    std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Small vector helpers
// ---------------------------------------------------------------------------

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("dot: length mismatch " + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm_l1(const Vec& v) {
    double acc = 0.0;
    for (double x : v) acc += std::abs(x);
    return acc;
}

inline double norm_l2(const Vec& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

inline double norm_inf(const Vec& v) {
    double acc = 0.0;
    for (double x : v) acc = std::max(acc, std::abs(x));
    return acc;
}

inline bool all_finite(const Vec& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace softmask
