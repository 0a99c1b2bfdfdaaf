#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "softmask/masked_model.hpp"
#include "softmask/optim.hpp"
#include "softmask/regularizers.hpp"

namespace softmask {

// ---------------------------------------------------------------------------
// Pruning primitives
// ---------------------------------------------------------------------------

/// Zero every coordinate with value strictly below alpha. With freeze = true
/// (the default) those coordinates are marked permanently pruned; freeze =
/// false keeps them trainable, the literal reading of the update rule.
inline RelaxedMask threshold_prune(const RelaxedMask& mask, double alpha, bool freeze = true) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("threshold_prune: alpha must lie in (0,1), got " +
                                    std::to_string(alpha));
    RelaxedMask out = mask;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.is_frozen(i)) continue;
        if (out.value(i) < alpha) {
            if (freeze)
                out.freeze_zero(i);
            else
                out.set(i, 0.0);
        }
    }
    return out;
}

/// Prune the floor(p * active) unfrozen coordinates with the smallest mask
/// values; ties broken towards the lowest index.
inline RelaxedMask hard_prune(const RelaxedMask& mask, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("hard_prune: fraction must lie in (0,1), got " +
                                    std::to_string(fraction));
    RelaxedMask out = mask;
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!out.is_frozen(i)) active.push_back(i);
    const auto k = static_cast<std::size_t>(fraction * static_cast<double>(active.size()));
    if (k == 0) return out;
    std::stable_sort(active.begin(), active.end(), [&](std::size_t a, std::size_t b) {
        return out.value(a) < out.value(b);
    });
    for (std::size_t j = 0; j < k; ++j) out.freeze_zero(active[j]);
    return out;
}

/// Keep the n unfrozen coordinates with the largest mask values and prune the
/// rest; among equal values the lower index survives. Used to compare pruning
/// strategies at a matched survivor count.
inline RelaxedMask keep_top(const RelaxedMask& mask, std::size_t n) {
    RelaxedMask out = mask;
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!out.is_frozen(i)) active.push_back(i);
    if (n >= active.size()) return out;
    std::stable_sort(active.begin(), active.end(), [&](std::size_t a, std::size_t b) {
        return out.value(a) > out.value(b);
    });
    for (std::size_t j = n; j < active.size(); ++j) out.freeze_zero(active[j]);
    return out;
}

/// One iterative-magnitude-pruning step: keep the floor((1-p) * surviving)
/// coordinates of largest weight magnitude, zero the rest; ties broken
/// towards the lowest index. Already-pruned coordinates stay out of the pool.
inline RelaxedMask imp_prune(const Vec& weights, const RelaxedMask& mask, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("imp_prune: fraction must lie in (0,1), got " +
                                    std::to_string(fraction));
    if (weights.size() != mask.size())
        throw std::invalid_argument("imp_prune: " + std::to_string(weights.size()) +
                                    " weights vs mask of length " + std::to_string(mask.size()));
    RelaxedMask out = mask;
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!out.is_frozen(i)) active.push_back(i);
    const auto keep =
        static_cast<std::size_t>((1.0 - fraction) * static_cast<double>(active.size()));
    const std::size_t drop = active.size() - keep;
    if (drop == 0) return out;
    std::stable_sort(active.begin(), active.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(weights[a]) < std::abs(weights[b]);
    });
    for (std::size_t j = 0; j < drop; ++j) out.freeze_zero(active[j]);
    return out;
}

// ---------------------------------------------------------------------------
// Outer loop
// ---------------------------------------------------------------------------

struct Checkpoint {
    Vec weights;
    Vec biases;
    std::string tag;  // "init" or "epoch <k>"
};

inline Checkpoint snapshot(const MaskedModel& model, std::string tag) {
    return Checkpoint{model.weights(), model.biases(), std::move(tag)};
}

inline void restore(MaskedModel& model, const Checkpoint& ckpt) {
    if (ckpt.weights.size() != model.weight_count() ||
        ckpt.biases.size() != model.biases().size())
        throw std::invalid_argument("restore: checkpoint does not match model shape");
    model.weights() = ckpt.weights;
    model.biases() = ckpt.biases;
}

enum class PruneStrategy { SoftThreshold, HardFraction, Imp, SigmoidReparam };

struct LotteryConfig {
    std::size_t rounds = 3;
    double alpha = 0.02;
    std::size_t rewind_epoch = 0;  // 0 rewinds to the initialization
    bool allow_regrowth = false;
    PruneStrategy strategy = PruneStrategy::SoftThreshold;
    double prune_fraction = 0.2;   // HardFraction and Imp
    OptimConfig optim;
    RegularizerSpec reg = RegularizerSpec::log();
    SigmoidReparamConfig sigmoid;

    void validate() const {
        if (rounds < 1) throw std::invalid_argument("lottery: need at least one round");
        if (!(alpha > 0.0 && alpha < 1.0))
            throw std::invalid_argument("lottery: alpha must lie in (0,1)");
        optim.validate();
    }
};

struct RoundReport {
    std::size_t round = 0;        // 1-based
    std::size_t survivors = 0;    // unfrozen coordinates after pruning
    double sparsity = 0.0;
    double val_accuracy = 0.0;
    double objective = 0.0;       // end-of-round training objective
    std::array<std::size_t, 10> mask_hist{};
};

struct LotteryResult {
    RelaxedMask mask;                // final pruned mask
    RelaxedMask last_trained_mask;   // final round's mask before pruning
    std::vector<RoundReport> rounds;
    Checkpoint rewind_point;
};

class LotteryError : public std::runtime_error {
public:
    LotteryError(const std::string& what, std::size_t round)
        : std::runtime_error(what + " (round " + std::to_string(round) + ")"), round_(round) {}
    std::size_t round() const { return round_; }

private:
    std::size_t round_;
};

/// Rounds of (rewind, optimize, prune). The mask starts at one half everywhere
/// (all ones for the magnitude-pruning baseline, which trains weights only)
/// and carries over between rounds; pruned coordinates stay pruned.
inline LotteryResult run_lottery(const MaskedModel& init_model, const LabeledDataset& train,
                                 const LabeledDataset& val, const LotteryConfig& cfg) {
    cfg.validate();
    MaskedModel model = init_model;
    const std::size_t d = model.weight_count();

    Checkpoint init = snapshot(model, "init");
    Checkpoint rewind = init;
    bool rewind_captured = cfg.rewind_epoch == 0;

    RelaxedMask mask = cfg.strategy == PruneStrategy::Imp ? RelaxedMask::ones(d)
                                                          : RelaxedMask(d, 0.5);
    std::vector<RoundReport> reports;

    for (std::size_t t = 1; t <= cfg.rounds; ++t) {
        restore(model, t == 1 ? init : rewind);
        model.set_mask(mask);

        EpochObserver observer;
        if (t == 1 && !rewind_captured) {
            observer = [&](std::size_t epoch, const MaskedModel& m) {
                if (epoch + 1 == cfg.rewind_epoch) {
                    rewind = snapshot(m, "epoch " + std::to_string(cfg.rewind_epoch));
                    rewind_captured = true;
                }
            };
        }

        TrainTrace trace;
        try {
            switch (cfg.strategy) {
                case PruneStrategy::SoftThreshold:
                case PruneStrategy::HardFraction:
                    trace = train_joint(model, train, cfg.reg, cfg.optim, observer);
                    break;
                case PruneStrategy::Imp:
                    trace = train_weights(model, train, cfg.optim, observer);
                    break;
                case PruneStrategy::SigmoidReparam:
                    trace = sigmoid_reparam_train(model, train, cfg.optim, cfg.sigmoid, observer);
                    break;
            }
        } catch (const TrainingError& e) {
            throw LotteryError(e.what(), t);
        }
        if (t == 1 && !rewind_captured)
            throw LotteryError("rewind epoch " + std::to_string(cfg.rewind_epoch) +
                               " beyond the round budget", t);

        RelaxedMask trained = model.mask();
        switch (cfg.strategy) {
            case PruneStrategy::SoftThreshold:
            case PruneStrategy::SigmoidReparam:
                mask = threshold_prune(model.mask(), cfg.alpha, !cfg.allow_regrowth);
                break;
            case PruneStrategy::HardFraction:
                mask = hard_prune(model.mask(), cfg.prune_fraction);
                break;
            case PruneStrategy::Imp:
                mask = imp_prune(model.weights(), model.mask(), cfg.prune_fraction);
                break;
        }
        model.set_mask(mask);

        RoundReport rep;
        rep.round = t;
        rep.survivors = mask.active_count();
        rep.sparsity = mask.sparsity();
        rep.val_accuracy = model.accuracy(val);
        rep.objective = trace.empty() ? 0.0 : trace.back().objective;
        rep.mask_hist = mask.histogram();
        reports.push_back(rep);

        if (t == cfg.rounds)
            return LotteryResult{std::move(mask), std::move(trained), std::move(reports),
                                 std::move(rewind)};
    }
    throw std::logic_error("run_lottery: unreachable");
}

/// Retrains the ticket in isolation: binarize the surviving coordinates,
/// rewind the weights, train with the mask fixed, report validation accuracy.
inline double evaluate_ticket(const RelaxedMask& mask, const Checkpoint& ckpt,
                              const MaskedModel& arch_model, const LabeledDataset& train,
                              const LabeledDataset& val, const OptimConfig& cfg) {
    MaskedModel model = arch_model;
    restore(model, ckpt);
    model.set_mask(mask.binarized());
    train_weights(model, train, cfg);
    return model.accuracy(val);
}

}  // namespace softmask
