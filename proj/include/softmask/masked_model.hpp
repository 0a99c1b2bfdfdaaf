#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "softmask/numerics.hpp"

namespace softmask {

// ---------------------------------------------------------------------------
// Relaxed mask m in [0,1]^d with permanent-zero tracking
// ---------------------------------------------------------------------------

class RelaxedMask {
public:
    RelaxedMask() = default;

    explicit RelaxedMask(std::size_t d, double value = 0.5)
        : values_(d, value), frozen_(d, 0) {
        if (!(value >= 0.0 && value <= 1.0))
            throw std::invalid_argument("RelaxedMask: initial value " + std::to_string(value) +
                                        " outside [0,1]");
    }

    static RelaxedMask ones(std::size_t d) { return RelaxedMask(d, 1.0); }

    std::size_t size() const { return values_.size(); }
    const Vec& values() const { return values_; }
    double value(std::size_t i) const { return values_[i]; }
    bool is_frozen(std::size_t i) const { return frozen_[i] != 0; }

    void set(std::size_t i, double v) {
        if (frozen_[i])
            throw std::logic_error("RelaxedMask: coordinate " + std::to_string(i) +
                                   " is frozen at zero");
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("RelaxedMask: value " + std::to_string(v) +
                                        " outside [0,1]");
        values_[i] = v;
    }

    /// Zero the coordinate and mark it permanently pruned.
    void freeze_zero(std::size_t i) {
        values_[i] = 0.0;
        frozen_[i] = 1;
    }

    /// Coordinates not (yet) pruned.
    std::size_t active_count() const {
        std::size_t n = 0;
        for (auto f : frozen_) n += (f == 0);
        return n;
    }

    std::size_t frozen_count() const { return size() - active_count(); }

    std::size_t nonzero_count() const {
        std::size_t n = 0;
        for (double v : values_) n += (v > 0.0);
        return n;
    }

    /// Fraction of coordinates pruned away.
    double sparsity() const {
        return size() == 0 ? 0.0 : 1.0 - static_cast<double>(active_count()) / size();
    }

    /// Surviving (unpruned) coordinates become exactly 1.
    RelaxedMask binarized() const {
        RelaxedMask out(size(), 0.0);
        for (std::size_t i = 0; i < size(); ++i) {
            if (frozen_[i])
                out.freeze_zero(i);
            else
                out.set(i, 1.0);
        }
        return out;
    }

    /// Counts per decile of [0,1]; frozen coordinates land in the first bin.
    std::array<std::size_t, 10> histogram() const {
        std::array<std::size_t, 10> bins{};
        for (double v : values_) {
            auto b = static_cast<std::size_t>(v * 10.0);
            bins[b > 9 ? 9 : b] += 1;
        }
        return bins;
    }

private:
    Vec values_;
    std::vector<std::uint8_t> frozen_;
};

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

enum class Split { Train, Validation };

struct LabeledDataset {
    DenseMatrix features;      // N x d_in
    std::vector<int> labels;   // class indices in [0, num_classes)
    int num_classes = 2;
    Split split = Split::Train;

    std::size_t size() const { return labels.size(); }
    std::size_t feature_dim() const { return features.cols(); }
};

inline LabeledDataset make_dataset(DenseMatrix features, std::vector<int> labels,
                                   int num_classes, Split split) {
    if (labels.size() != features.rows())
        throw std::invalid_argument("dataset: " + std::to_string(features.rows()) +
                                    " feature rows vs " + std::to_string(labels.size()) +
                                    " labels");
    for (int y : labels)
        if (y < 0 || y >= num_classes)
            throw std::invalid_argument("dataset: label " + std::to_string(y) +
                                        " outside [0," + std::to_string(num_classes) + ")");
    if (!features.all_finite())
        throw std::invalid_argument("dataset: non-finite feature entries");
    return LabeledDataset{std::move(features), std::move(labels), num_classes, split};
}

/// Column j of the output is column j of `features` scaled by theta_hat[j].
/// Training a mask over the result with unit weights is equivalent to masking
/// theta_hat in the original model.
inline DenseMatrix mask_only_dataset(const Vec& theta_hat, const DenseMatrix& features) {
    if (theta_hat.size() != features.cols())
        throw std::invalid_argument("mask_only_dataset: features are " + features.shape_str() +
                                    " but theta has length " + std::to_string(theta_hat.size()));
    DenseMatrix out(features.rows(), features.cols());
    for (std::size_t i = 0; i < features.rows(); ++i)
        for (std::size_t j = 0; j < features.cols(); ++j)
            out(i, j) = features(i, j) * theta_hat[j];
    return out;
}

// ---------------------------------------------------------------------------
// Masked models: logistic regression and a small MLP
// ---------------------------------------------------------------------------

struct LogisticArch {
    std::size_t input_dim = 0;
    bool use_bias = true;
};

struct MlpArch {
    std::vector<std::size_t> layers;  // e.g. {400, 32, 10}
};

using Arch = std::variant<LogisticArch, MlpArch>;

struct Grads {
    Vec w;  // wrt weights
    Vec m;  // wrt mask values (zero on frozen coordinates)
    Vec b;  // wrt biases
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

constexpr double kProbClip = 1e-12;

/// Model whose effective parameters are mask (.) weights. Biases are neither
/// masked nor regularized. An optional l2 term (l2_penalty/2)*||m.w||^2 makes
/// the mask-only loss strongly convex.
class MaskedModel {
public:
    static MaskedModel logistic(std::size_t input_dim, bool use_bias = true) {
        MaskedModel m;
        m.arch_ = LogisticArch{input_dim, use_bias};
        m.weights_.assign(input_dim, 0.0);
        m.biases_.assign(use_bias ? 1 : 0, 0.0);
        m.mask_ = RelaxedMask(input_dim, 1.0);
        return m;
    }

    static MaskedModel mlp(std::vector<std::size_t> layers) {
        if (layers.size() < 2)
            throw std::invalid_argument("mlp: need at least input and output layer sizes");
        MaskedModel m;
        std::size_t n_w = 0, n_b = 0;
        for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
            n_w += layers[l + 1] * layers[l];
            n_b += layers[l + 1];
        }
        m.arch_ = MlpArch{std::move(layers)};
        m.weights_.assign(n_w, 0.0);
        m.biases_.assign(n_b, 0.0);
        m.mask_ = RelaxedMask(n_w, 1.0);
        return m;
    }

    bool is_logistic() const { return std::holds_alternative<LogisticArch>(arch_); }
    const Arch& arch() const { return arch_; }

    std::size_t weight_count() const { return weights_.size(); }

    std::size_t input_dim() const {
        if (is_logistic()) return std::get<LogisticArch>(arch_).input_dim;
        return std::get<MlpArch>(arch_).layers.front();
    }

    std::size_t output_dim() const {
        if (is_logistic()) return 1;
        return std::get<MlpArch>(arch_).layers.back();
    }

    Vec& weights() { return weights_; }
    const Vec& weights() const { return weights_; }
    Vec& biases() { return biases_; }
    const Vec& biases() const { return biases_; }
    RelaxedMask& mask() { return mask_; }
    const RelaxedMask& mask() const { return mask_; }

    void set_mask(RelaxedMask m) {
        if (m.size() != weights_.size())
            throw std::invalid_argument("set_mask: mask length " + std::to_string(m.size()) +
                                        " vs " + std::to_string(weights_.size()) + " weights");
        mask_ = std::move(m);
    }

    double l2_penalty() const { return l2_penalty_; }
    void set_l2_penalty(double gamma2) {
        if (!(gamma2 >= 0.0))
            throw std::invalid_argument("l2 penalty must be nonnegative");
        l2_penalty_ = gamma2;
    }

    /// Logistic weights start at zero; MLP weights are uniform in
    /// +-sqrt(6/fan_in). Biases start at zero.
    void init_weights(SeededRng& rng) {
        if (is_logistic()) {
            std::fill(weights_.begin(), weights_.end(), 0.0);
        } else {
            const auto& layers = std::get<MlpArch>(arch_).layers;
            std::size_t off = 0;
            for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
                const double limit = std::sqrt(6.0 / static_cast<double>(layers[l]));
                const std::size_t n = layers[l + 1] * layers[l];
                for (std::size_t i = 0; i < n; ++i)
                    weights_[off + i] = rng.uniform(-limit, limit);
                off += n;
            }
        }
        std::fill(biases_.begin(), biases_.end(), 0.0);
    }

    Vec effective_params() const {
        Vec p(weights_.size());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = mask_.value(i) * weights_[i];
        return p;
    }

    /// N x 1 probabilities of class 1 (logistic) or N x C softmax rows (MLP).
    DenseMatrix forward(const DenseMatrix& x) const {
        check_input(x);
        const Vec eff = effective_params();
        if (is_logistic()) {
            const auto& a = std::get<LogisticArch>(arch_);
            DenseMatrix out(x.rows(), 1);
            for (std::size_t i = 0; i < x.rows(); ++i) {
                double z = dot(x.row(i), eff);
                if (a.use_bias) z += biases_[0];
                out(i, 0) = sigmoid(z);
            }
            return out;
        }
        const auto& layers = std::get<MlpArch>(arch_).layers;
        DenseMatrix out(x.rows(), layers.back());
        std::vector<Vec> act;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            mlp_forward(eff, x.row(i), act);
            const Vec& probs = act.back();
            for (std::size_t c = 0; c < probs.size(); ++c) out(i, c) = probs[c];
        }
        return out;
    }

    double loss(const LabeledDataset& data) const {
        return loss(data, all_indices(data.size()));
    }

    /// Mean negative log-likelihood over the given sample indices plus the
    /// optional l2 term on the effective parameters.
    double loss(const LabeledDataset& data, std::span<const std::size_t> idx) const {
        check_data(data);
        if (idx.empty()) throw std::invalid_argument("loss: empty batch");
        const Vec eff = effective_params();
        double acc = 0.0;
        if (is_logistic()) {
            const auto& a = std::get<LogisticArch>(arch_);
            for (std::size_t i : idx) {
                double z = dot(data.features.row(i), eff);
                if (a.use_bias) z += biases_[0];
                const double p = clip_prob(sigmoid(z));
                acc -= data.labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
            }
        } else {
            std::vector<Vec> act;
            for (std::size_t i : idx) {
                mlp_forward(eff, data.features.row(i), act);
                acc -= std::log(clip_prob(act.back()[data.labels[i]]));
            }
        }
        acc /= static_cast<double>(idx.size());
        if (l2_penalty_ > 0.0) {
            double sq = 0.0;
            for (double p : eff) sq += p * p;
            acc += 0.5 * l2_penalty_ * sq;
        }
        return acc;
    }

    Grads grads(const LabeledDataset& data) const {
        return grads(data, all_indices(data.size()));
    }

    /// Chain rule through the effective parameters p = m.w:
    ///   dL/dw = dL/dp (.) m,   dL/dm = dL/dp (.) w.
    /// Frozen mask coordinates report zero mask gradient.
    Grads grads(const LabeledDataset& data, std::span<const std::size_t> idx) const {
        check_data(data);
        if (idx.empty()) throw std::invalid_argument("grads: empty batch");
        const Vec eff = effective_params();
        Vec g_eff(weights_.size(), 0.0);
        Vec g_b(biases_.size(), 0.0);
        const double inv_n = 1.0 / static_cast<double>(idx.size());

        if (is_logistic()) {
            const auto& a = std::get<LogisticArch>(arch_);
            for (std::size_t i : idx) {
                double z = dot(data.features.row(i), eff);
                if (a.use_bias) z += biases_[0];
                const double dz = (sigmoid(z) - static_cast<double>(data.labels[i])) * inv_n;
                const auto row = data.features.row(i);
                for (std::size_t j = 0; j < row.size(); ++j) g_eff[j] += dz * row[j];
                if (a.use_bias) g_b[0] += dz;
            }
        } else {
            mlp_backward(eff, data, idx, inv_n, g_eff, g_b);
        }

        if (l2_penalty_ > 0.0)
            for (std::size_t j = 0; j < g_eff.size(); ++j) g_eff[j] += l2_penalty_ * eff[j];

        Grads g;
        g.w.resize(weights_.size());
        g.m.resize(weights_.size());
        g.b = std::move(g_b);
        for (std::size_t j = 0; j < weights_.size(); ++j) {
            g.w[j] = g_eff[j] * mask_.value(j);
            g.m[j] = mask_.is_frozen(j) ? 0.0 : g_eff[j] * weights_[j];
        }
        return g;
    }

    double accuracy(const LabeledDataset& data) const {
        const DenseMatrix probs = forward(data.features);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            int pred;
            if (is_logistic()) {
                pred = probs(i, 0) > 0.5 ? 1 : 0;
            } else {
                pred = 0;
                for (std::size_t c = 1; c < probs.cols(); ++c)
                    if (probs(i, c) > probs(i, pred)) pred = static_cast<int>(c);
            }
            hits += (pred == data.labels[i]);
        }
        return static_cast<double>(hits) / static_cast<double>(data.size());
    }

private:
    static double clip_prob(double p) {
        return p < kProbClip ? kProbClip : (p > 1.0 - kProbClip ? 1.0 - kProbClip : p);
    }

    static std::span<const std::size_t> all_indices(std::size_t n) {
        thread_local std::vector<std::size_t> idx;
        if (idx.size() < n) {
            idx.resize(n);
            std::iota(idx.begin(), idx.end(), std::size_t{0});
        }
        return {idx.data(), n};
    }

    void check_input(const DenseMatrix& x) const {
        if (x.cols() != input_dim())
            throw std::invalid_argument("model expects " + std::to_string(input_dim()) +
                                        " features, got " + x.shape_str());
    }

    void check_data(const LabeledDataset& data) const {
        check_input(data.features);
        const int want = is_logistic() ? 2 : static_cast<int>(output_dim());
        if (data.num_classes != want)
            throw std::invalid_argument("model has " + std::to_string(want) +
                                        " classes, dataset has " +
                                        std::to_string(data.num_classes));
    }

    /// Fills `act` with activations per layer; act.back() is the softmax row.
    void mlp_forward(const Vec& eff, std::span<const double> x, std::vector<Vec>& act) const {
        const auto& layers = std::get<MlpArch>(arch_).layers;
        act.assign(layers.size(), {});
        act[0].assign(x.begin(), x.end());
        std::size_t w_off = 0, b_off = 0;
        for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
            const std::size_t n_in = layers[l], n_out = layers[l + 1];
            Vec z(n_out);
            for (std::size_t o = 0; o < n_out; ++o) {
                double acc = biases_[b_off + o];
                const double* wrow = eff.data() + w_off + o * n_in;
                for (std::size_t j = 0; j < n_in; ++j) acc += wrow[j] * act[l][j];
                z[o] = acc;
            }
            const bool last = (l + 2 == layers.size());
            if (last) {
                double zmax = z[0];
                for (double v : z) zmax = std::max(zmax, v);
                double sum = 0.0;
                for (double& v : z) {
                    v = std::exp(v - zmax);
                    sum += v;
                }
                for (double& v : z) v /= sum;
            } else {
                for (double& v : z) v = v > 0.0 ? v : 0.0;
            }
            act[l + 1] = std::move(z);
            w_off += n_out * n_in;
            b_off += n_out;
        }
    }

    void mlp_backward(const Vec& eff, const LabeledDataset& data,
                      std::span<const std::size_t> idx, double inv_n, Vec& g_eff,
                      Vec& g_b) const {
        const auto& layers = std::get<MlpArch>(arch_).layers;
        const std::size_t n_layers = layers.size();
        std::vector<std::size_t> w_offs(n_layers - 1), b_offs(n_layers - 1);
        {
            std::size_t w = 0, b = 0;
            for (std::size_t l = 0; l + 1 < n_layers; ++l) {
                w_offs[l] = w;
                b_offs[l] = b;
                w += layers[l + 1] * layers[l];
                b += layers[l + 1];
            }
        }
        std::vector<Vec> act;
        for (std::size_t i : idx) {
            mlp_forward(eff, data.features.row(i), act);
            // delta at the softmax layer
            Vec delta = act.back();
            delta[data.labels[i]] -= 1.0;
            for (double& v : delta) v *= inv_n;
            for (std::size_t l = n_layers - 1; l-- > 0;) {
                const std::size_t n_in = layers[l], n_out = layers[l + 1];
                for (std::size_t o = 0; o < n_out; ++o) {
                    const double d = delta[o];
                    double* grow = g_eff.data() + w_offs[l] + o * n_in;
                    const double* a = act[l].data();
                    for (std::size_t j = 0; j < n_in; ++j) grow[j] += d * a[j];
                    g_b[b_offs[l] + o] += d;
                }
                if (l == 0) break;
                Vec prev(n_in, 0.0);
                for (std::size_t o = 0; o < n_out; ++o) {
                    const double d = delta[o];
                    const double* wrow = eff.data() + w_offs[l] + o * n_in;
                    for (std::size_t j = 0; j < n_in; ++j) prev[j] += d * wrow[j];
                }
                // rectifier gate of the hidden layer
                for (std::size_t j = 0; j < n_in; ++j)
                    if (act[l][j] <= 0.0) prev[j] = 0.0;
                delta = std::move(prev);
            }
        }
    }

    Arch arch_;
    Vec weights_;
    Vec biases_;
    RelaxedMask mask_;
    double l2_penalty_ = 0.0;
};

}  // namespace softmask
