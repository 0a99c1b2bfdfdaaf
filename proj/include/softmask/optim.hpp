#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "softmask/masked_model.hpp"
#include "softmask/numerics.hpp"
#include "softmask/regularizers.hpp"

namespace softmask {

// ---------------------------------------------------------------------------
// Configuration and traces
// ---------------------------------------------------------------------------

struct OptimConfig {
    double learning_rate = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;               // applied to weights only
    std::size_t epochs = 100;
    std::size_t batch_size = 128;
    std::vector<std::size_t> lr_milestones;   // decay applied from these epochs on
    double lr_decay = 0.1;
    double mask_lr_scale = 1.0;               // mask step = learning_rate * scale
    bool full_batch = false;
    double stop_tol = 0.0;                    // mask stationarity stop; 0 disables
    std::uint64_t seed = 0;                   // minibatch shuffling

    void validate() const {
        if (!(learning_rate > 0.0)) throw std::invalid_argument("optim: learning rate must be positive");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("optim: momentum must be in [0,1)");
        if (!(weight_decay >= 0.0)) throw std::invalid_argument("optim: weight decay must be nonnegative");
        if (batch_size < 1) throw std::invalid_argument("optim: batch size must be at least 1");
        if (!(mask_lr_scale > 0.0)) throw std::invalid_argument("optim: mask lr scale must be positive");
        for (std::size_t i = 1; i < lr_milestones.size(); ++i)
            if (lr_milestones[i] <= lr_milestones[i - 1])
                throw std::invalid_argument("optim: lr milestones must be strictly increasing");
    }

    double lr_at(std::size_t epoch) const {
        double lr = learning_rate;
        for (std::size_t m : lr_milestones)
            if (epoch >= m) lr *= lr_decay;
        return lr;
    }
};

/// Exponential beta schedule for the sigmoid-reparameterized mask baseline:
/// beta(t) = beta_final^(t/T), so beta(0) = 1 and beta(T) = beta_final.
struct SigmoidReparamConfig {
    double beta_final = 200.0;

    double beta_at(std::size_t epoch, std::size_t total_epochs) const {
        if (total_epochs == 0) return beta_final;
        return std::pow(beta_final,
                        static_cast<double>(epoch) / static_cast<double>(total_epochs));
    }
};

struct EpochStats {
    std::size_t epoch = 0;
    double loss = 0.0;         // full-batch data loss at epoch end
    double objective = 0.0;    // loss plus active penalties
    std::array<std::size_t, 10> mask_hist{};
    std::size_t exact_zero_weights = 0;
    double sign_flip_fraction = 0.0;  // weight-sign flips since previous epoch
};

using TrainTrace = std::vector<EpochStats>;

using EpochObserver = std::function<void(std::size_t epoch, const MaskedModel&)>;

class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, std::size_t epoch, std::ptrdiff_t batch)
        : std::runtime_error(what + " (epoch " + std::to_string(epoch) +
                             (batch >= 0 ? ", batch " + std::to_string(batch) : "") + ")"),
          epoch_(epoch),
          batch_(batch) {}

    std::size_t epoch() const { return epoch_; }
    std::ptrdiff_t batch_index() const { return batch_; }

private:
    std::size_t epoch_;
    std::ptrdiff_t batch_;
};

// ---------------------------------------------------------------------------
// Projected gradient step
// ---------------------------------------------------------------------------

inline double pgd_step_coord(double m, double g, double step) {
    return clamp_unit(m - step * g);
}

/// Stationarity measure ||m - clamp(m - step*g)||_inf restricted to unfrozen
/// coordinates.
inline double pgd_stationarity(const RelaxedMask& mask, const Vec& grad, double step) {
    double s = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask.is_frozen(i)) continue;
        const double next = pgd_step_coord(mask.value(i), grad[i], step);
        s = std::max(s, std::abs(mask.value(i) - next));
    }
    return s;
}

struct PgdResult {
    Vec m;
    std::size_t iterations = 0;
    double stationarity = 0.0;
};

/// Plain full-batch projected gradient descent on a boxed vector:
/// m <- clamp(m - step * (loss_grad(m) + lambda * reg_grad(m))).
inline PgdResult pgd_box(const std::function<Vec(const Vec&)>& loss_grad, Vec m,
                         const RegularizerSpec& reg, double step, std::size_t max_iters,
                         double tol) {
    m = clamp_box(m);
    PgdResult res;
    res.stationarity = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < max_iters; ++it) {
        Vec g = loss_grad(m);
        if (g.size() != m.size())
            throw std::invalid_argument("pgd_box: gradient length mismatch");
        const double lambda = reg.lambda();
        double stat = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double gi = g[i] + lambda * reg_scalar_grad(reg, m[i]);
            const double next = pgd_step_coord(m[i], gi, step);
            stat = std::max(stat, std::abs(next - m[i]));
            m[i] = next;
        }
        res.iterations = it + 1;
        res.stationarity = stat;
        if (stat < tol) break;
    }
    res.m = std::move(m);
    return res;
}

// ---------------------------------------------------------------------------
// SGD driver shared by the training entry points
// ---------------------------------------------------------------------------

namespace detail {

struct StepPolicy {
    bool update_weights = false;
    bool update_mask = false;
    double subgrad_l1_lambda = 0.0;            // weight-space l1 via sign subgradient
    const RegularizerSpec* reg = nullptr;      // mask regularizer
    const SigmoidReparamConfig* sigmoid = nullptr;  // mask through latent scores
};

inline double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

inline TrainTrace run_sgd(MaskedModel& model, const LabeledDataset& data,
                          const OptimConfig& cfg, const StepPolicy& pol,
                          const EpochObserver& observer) {
    cfg.validate();
    const std::size_t n = data.size();
    const std::size_t d = model.weight_count();
    const std::size_t batch = cfg.full_batch ? n : std::min<std::size_t>(cfg.batch_size, n);

    Vec vel_w(d, 0.0), vel_b(model.biases().size(), 0.0);
    Vec latent;  // sigmoid mode scores, unfrozen coordinates only meaningful
    if (pol.sigmoid) {
        latent.assign(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            if (model.mask().is_frozen(i)) continue;
            const double m0 = std::min(1.0 - 1e-12, std::max(1e-12, model.mask().value(i)));
            latent[i] = std::log(m0 / (1.0 - m0));
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Vec prev_signs(d);
    for (std::size_t i = 0; i < d; ++i) prev_signs[i] = sign(model.weights()[i]);

    const double reg_lambda = pol.reg ? pol.reg->lambda() : 0.0;
    TrainTrace trace;
    trace.reserve(cfg.epochs);

    auto refresh_sigmoid_mask = [&](double beta) {
        for (std::size_t i = 0; i < d; ++i) {
            if (model.mask().is_frozen(i)) continue;
            model.mask().set(i, sigmoid(beta * latent[i]));
        }
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr_at(epoch);
        const double lr_m = lr * cfg.mask_lr_scale;
        const double beta = pol.sigmoid ? pol.sigmoid->beta_at(epoch, cfg.epochs) : 0.0;
        if (pol.sigmoid) refresh_sigmoid_mask(beta);

        if (!cfg.full_batch) {
            SeededRng shuffler(SeededRng::mix(cfg.seed, epoch));
            shuffler.shuffle(order);
        }

        for (std::size_t start = 0, b = 0; start < n; start += batch, ++b) {
            const std::size_t count = std::min(batch, n - start);
            const Grads g = model.grads(data, {order.data() + start, count});
            if (!all_finite(g.w) || !all_finite(g.m) || !all_finite(g.b))
                throw TrainingError("non-finite gradient", epoch,
                                    static_cast<std::ptrdiff_t>(b));

            if (pol.update_weights) {
                Vec& w = model.weights();
                for (std::size_t i = 0; i < d; ++i) {
                    double gi = g.w[i] + cfg.weight_decay * w[i];
                    if (pol.subgrad_l1_lambda > 0.0)
                        gi += pol.subgrad_l1_lambda * sign(w[i]);
                    vel_w[i] = cfg.momentum * vel_w[i] + gi;
                    w[i] -= lr * vel_w[i];
                }
                Vec& bias = model.biases();
                for (std::size_t i = 0; i < bias.size(); ++i) {
                    vel_b[i] = cfg.momentum * vel_b[i] + g.b[i];
                    bias[i] -= lr * vel_b[i];
                }
            }

            if (pol.update_mask) {
                if (pol.sigmoid) {
                    for (std::size_t i = 0; i < d; ++i) {
                        if (model.mask().is_frozen(i)) continue;
                        const double mv = model.mask().value(i);
                        latent[i] -= lr_m * g.m[i] * beta * mv * (1.0 - mv);
                        model.mask().set(i, sigmoid(beta * latent[i]));
                    }
                } else {
                    for (std::size_t i = 0; i < d; ++i) {
                        if (model.mask().is_frozen(i)) continue;
                        const double gi =
                            g.m[i] +
                            reg_lambda * reg_scalar_grad(*pol.reg, model.mask().value(i));
                        model.mask().set(i, pgd_step_coord(model.mask().value(i), gi, lr_m));
                    }
                }
            }
        }

        EpochStats st;
        st.epoch = epoch;
        st.loss = model.loss(data);
        if (!std::isfinite(st.loss)) throw TrainingError("non-finite loss", epoch, -1);
        st.objective = st.loss;
        if (pol.reg) st.objective += reg_lambda * reg_value(*pol.reg, model.mask().values());
        if (pol.subgrad_l1_lambda > 0.0)
            st.objective += pol.subgrad_l1_lambda * norm_l1(model.weights());
        st.mask_hist = model.mask().histogram();
        std::size_t zeros = 0, flips = 0;
        for (std::size_t i = 0; i < d; ++i) {
            const double s = sign(model.weights()[i]);
            zeros += (model.weights()[i] == 0.0);
            flips += (s != prev_signs[i]);
            prev_signs[i] = s;
        }
        st.exact_zero_weights = zeros;
        st.sign_flip_fraction = d == 0 ? 0.0 : static_cast<double>(flips) / d;
        trace.push_back(st);
        if (observer) observer(epoch, model);

        if (cfg.stop_tol > 0.0 && pol.update_mask && !pol.sigmoid) {
            const Grads g = model.grads(data);
            Vec total(d, 0.0);
            for (std::size_t i = 0; i < d; ++i)
                total[i] = g.m[i] + reg_lambda * reg_scalar_grad(*pol.reg,
                                                                 model.mask().value(i));
            if (pgd_stationarity(model.mask(), total, lr_m) < cfg.stop_tol) break;
        }
    }

    // Sharpen to the end-of-schedule mask, beta(T) = beta_final.
    if (pol.sigmoid) refresh_sigmoid_mask(pol.sigmoid->beta_at(cfg.epochs, cfg.epochs));
    return trace;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Training entry points
// ---------------------------------------------------------------------------

/// Joint optimization of weights and mask: momentum SGD with weight decay on
/// w, projected gradient on m for the regularized objective. Frozen mask
/// coordinates never move.
inline TrainTrace train_joint(MaskedModel& model, const LabeledDataset& data,
                              const RegularizerSpec& reg, const OptimConfig& cfg,
                              const EpochObserver& observer = {}) {
    detail::StepPolicy pol;
    pol.update_weights = true;
    pol.update_mask = true;
    pol.reg = &reg;
    return detail::run_sgd(model, data, cfg, pol, observer);
}

/// Mask-only training with the weights held fixed; the m-branch of
/// train_joint.
inline TrainTrace pgd_mask_only(MaskedModel& model, const LabeledDataset& data,
                                const RegularizerSpec& reg, const OptimConfig& cfg,
                                const EpochObserver& observer = {}) {
    detail::StepPolicy pol;
    pol.update_mask = true;
    pol.reg = &reg;
    return detail::run_sgd(model, data, cfg, pol, observer);
}

/// Plain momentum SGD on the weights with the mask fixed as-is.
inline TrainTrace train_weights(MaskedModel& model, const LabeledDataset& data,
                                const OptimConfig& cfg,
                                const EpochObserver& observer = {}) {
    detail::StepPolicy pol;
    pol.update_weights = true;
    return detail::run_sgd(model, data, cfg, pol, observer);
}

/// Weight-space l1 through the sign subgradient (sign(0) = 0). The iterates
/// oscillate around zero instead of reaching it, which is the failure mode
/// this routine exists to demonstrate.
inline TrainTrace subgrad_l1_weights(MaskedModel& model, const LabeledDataset& data,
                                     double lambda, const OptimConfig& cfg,
                                     const EpochObserver& observer = {}) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("subgrad_l1_weights: lambda must be nonnegative");
    detail::StepPolicy pol;
    pol.update_weights = true;
    pol.subgrad_l1_lambda = lambda;
    return detail::run_sgd(model, data, cfg, pol, observer);
}

/// Mask parameterized as sigmoid(beta * s) with latent scores s and beta on
/// the exponential schedule; no explicit regularizer. Weights train jointly.
/// After the last epoch the mask is refreshed at beta_final.
inline TrainTrace sigmoid_reparam_train(MaskedModel& model, const LabeledDataset& data,
                                        const OptimConfig& cfg,
                                        const SigmoidReparamConfig& sig,
                                        const EpochObserver& observer = {}) {
    detail::StepPolicy pol;
    pol.update_weights = true;
    pol.update_mask = true;
    pol.sigmoid = &sig;
    return detail::run_sgd(model, data, cfg, pol, observer);
}

}  // namespace softmask
