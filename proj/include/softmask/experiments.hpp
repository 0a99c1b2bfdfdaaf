#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "softmask/csv.hpp"
#include "softmask/data.hpp"
#include "softmask/lottery.hpp"
#include "softmask/masked_model.hpp"
#include "softmask/optim.hpp"
#include "softmask/regularizers.hpp"
#include "softmask/theory.hpp"

namespace softmask {

// ---------------------------------------------------------------------------
// Bounded worker pool; independent runs only, results land in caller slots.
// ---------------------------------------------------------------------------

inline void parallel_for(std::size_t n, std::size_t workers,
                         const std::function<void(std::size_t)>& fn) {
    if (workers == 0) workers = std::thread::hardware_concurrency();
    if (workers == 0) workers = 1;
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::scoped_lock lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Lambda sweep over the two-class task (four methods)
// ---------------------------------------------------------------------------

struct SweepOptions {
    std::vector<double> lambda_grid = {0.0, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2};
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::vector<std::string> methods = {"plain", "subgrad-l1", "mask-l1", "mask-log"};
    double epsilon = kDefaultEpsilon;
    double alpha = 0.02;           // pruning threshold applied after mask training
    bool mask_intercept = false;   // literal reading: intercept column inside the mask
    OptimConfig dense_optim;       // theta-hat fit, plain and subgradient runs
    OptimConfig mask_optim;        // projected-gradient mask runs
    std::size_t workers = 0;

    SweepOptions() {
        dense_optim.epochs = 150;
        dense_optim.batch_size = 64;
        mask_optim.epochs = 500;
        mask_optim.full_batch = true;
        mask_optim.learning_rate = 1.0;
        mask_optim.momentum = 0.0;
        mask_optim.weight_decay = 0.0;
    }
};

struct SweepRow {
    std::string method;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    std::size_t nonzeros = 0;
    double sparsity = 0.0;
    double val_accuracy = 0.0;
    std::string error;  // non-empty when the run failed
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::size_t dimension = 0;
};

namespace detail {

/// Dense fit shared by the mask methods; small random init so that dead
/// pixels do not sit at exactly zero.
inline MaskedModel fit_dense_logistic(const LabeledDataset& train, bool use_bias,
                                      const OptimConfig& cfg, std::uint64_t seed) {
    MaskedModel model = MaskedModel::logistic(train.feature_dim(), use_bias);
    SeededRng init(SeededRng::mix(seed, 0x1091));
    for (double& w : model.weights()) w = 0.01 * init.normal();
    OptimConfig run = cfg;
    run.seed = seed;
    train_weights(model, train, run);
    return model;
}

}  // namespace detail

/// Runs the method grid over per-seed random subsets of the corpus; one row
/// per (method, lambda, seed). Mask methods train only the mask over the
/// fixed dense fit, then prune at alpha; their reported accuracy keeps the
/// fractional surviving mask values.
inline SweepResult run_sweep(const LabeledDataset& corpus, const MnistSubsetSpec& subset,
                             const SweepOptions& opt) {
    struct SeedTask {
        std::uint64_t seed;
        std::vector<SweepRow> rows;
    };
    std::vector<SeedTask> tasks;
    tasks.reserve(opt.seeds.size());
    for (auto s : opt.seeds) tasks.push_back({s, {}});

    MnistSubsetSpec sub = subset;
    sub.add_intercept = opt.mask_intercept;
    const bool use_bias = !opt.mask_intercept;

    parallel_for(tasks.size(), opt.workers, [&](std::size_t ti) {
        SeedTask& task = tasks[ti];
        SeededRng subset_rng(SeededRng::mix(task.seed, 0xDA7A));
        const auto [train, val] = make_subset(corpus, sub, subset_rng);
        const std::size_t d = train.feature_dim();

        MaskedModel dense;
        std::string dense_error;
        try {
            dense = detail::fit_dense_logistic(train, use_bias, opt.dense_optim, task.seed);
        } catch (const std::exception& e) {
            dense_error = e.what();
        }

        for (const std::string& method : opt.methods) {
            for (double lambda : opt.lambda_grid) {
                SweepRow row;
                row.method = method;
                row.lambda = lambda;
                row.seed = task.seed;
                try {
                    if (!dense_error.empty()) throw std::runtime_error(dense_error);
                    if (method == "plain") {
                        std::size_t nz = 0;
                        for (double w : dense.weights()) nz += (w != 0.0);
                        row.nonzeros = nz;
                        row.val_accuracy = dense.accuracy(val);
                    } else if (method == "subgrad-l1") {
                        MaskedModel model = MaskedModel::logistic(d, use_bias);
                        SeededRng init(SeededRng::mix(task.seed, 0x1091));
                        for (double& w : model.weights()) w = 0.01 * init.normal();
                        OptimConfig cfg = opt.dense_optim;
                        cfg.seed = task.seed;
                        subgrad_l1_weights(model, train, lambda, cfg);
                        std::size_t nz = 0;
                        for (double w : model.weights()) nz += (w != 0.0);
                        row.nonzeros = nz;
                        row.val_accuracy = model.accuracy(val);
                    } else if (method == "mask-l1" || method == "mask-log") {
                        const RegularizerSpec reg =
                            method == "mask-l1" ? RegularizerSpec::l1(lambda)
                                                : RegularizerSpec::log(opt.epsilon, lambda);
                        MaskedModel model = dense;
                        model.set_mask(RelaxedMask(d, 0.5));
                        OptimConfig cfg = opt.mask_optim;
                        cfg.seed = task.seed;
                        pgd_mask_only(model, train, reg, cfg);
                        model.set_mask(threshold_prune(model.mask(), opt.alpha));
                        row.nonzeros = model.mask().active_count();
                        row.val_accuracy = model.accuracy(val);
                    } else {
                        throw std::invalid_argument("unknown sweep method '" + method + "'");
                    }
                    row.sparsity = 1.0 - static_cast<double>(row.nonzeros) /
                                             static_cast<double>(d);
                } catch (const std::exception& e) {
                    row.error = e.what();
                }
                task.rows.push_back(std::move(row));
            }
        }
    });

    SweepResult result;
    for (auto& task : tasks)
        for (auto& row : task.rows) result.rows.push_back(std::move(row));
    std::stable_sort(result.rows.begin(), result.rows.end(),
                     [](const SweepRow& a, const SweepRow& b) {
                         if (a.method != b.method) return a.method < b.method;
                         if (a.lambda != b.lambda) return a.lambda < b.lambda;
                         return a.seed < b.seed;
                     });
    if (!opt.seeds.empty()) {
        SeededRng probe_rng(SeededRng::mix(opt.seeds.front(), 0xDA7A));
        result.dimension = make_subset(corpus, sub, probe_rng).first.feature_dim();
    }
    return result;
}

inline CsvWriter sweep_csv(const SweepResult& result) {
    CsvWriter csv({"method", "lambda", "seed", "nonzeros", "sparsity", "val_accuracy",
                   "error"});
    for (const auto& r : result.rows)
        csv.add_row({r.method, fmt_double(r.lambda), std::to_string(r.seed),
                     std::to_string(r.nonzeros), fmt_double(r.sparsity),
                     fmt_double(r.val_accuracy), r.error});
    return csv;
}

inline CsvWriter sweep_summary_csv(const SweepResult& result) {
    struct Agg {
        std::vector<double> nonzeros, sparsity, accuracy;
    };
    std::map<std::pair<std::string, double>, Agg> groups;
    for (const auto& r : result.rows) {
        if (!r.error.empty()) continue;
        Agg& a = groups[{r.method, r.lambda}];
        a.nonzeros.push_back(static_cast<double>(r.nonzeros));
        a.sparsity.push_back(r.sparsity);
        a.accuracy.push_back(r.val_accuracy);
    }
    auto mean = [](const std::vector<double>& v) {
        double acc = 0.0;
        for (double x : v) acc += x;
        return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
    };
    auto stdev = [&](const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        const double mu = mean(v);
        double acc = 0.0;
        for (double x : v) acc += (x - mu) * (x - mu);
        return std::sqrt(acc / static_cast<double>(v.size() - 1));
    };
    CsvWriter csv({"method", "lambda", "runs", "mean_nonzeros", "std_nonzeros",
                   "mean_sparsity", "std_sparsity", "mean_accuracy", "std_accuracy"});
    for (const auto& [key, agg] : groups)
        csv.add_row({key.first, fmt_double(key.second), std::to_string(agg.nonzeros.size()),
                     fmt_double(mean(agg.nonzeros)), fmt_double(stdev(agg.nonzeros)),
                     fmt_double(mean(agg.sparsity)), fmt_double(stdev(agg.sparsity)),
                     fmt_double(mean(agg.accuracy)), fmt_double(stdev(agg.accuracy))});
    return csv;
}

// ---------------------------------------------------------------------------
// Lottery experiment wrapper
// ---------------------------------------------------------------------------

struct LotteryRunOptions {
    LotteryConfig lottery;
    OptimConfig retrain;       // ticket and dense-baseline retraining
    std::uint64_t seed = 1;
    bool logistic = false;
    std::vector<std::size_t> hidden = {32};  // MLP hidden layer sizes

    LotteryRunOptions() { retrain.epochs = 40; }
};

struct LotteryRunResult {
    std::vector<RoundReport> rounds;
    std::size_t survivors = 0;
    double final_sparsity = 0.0;
    double ticket_accuracy = 0.0;
    double dense_accuracy = 0.0;
    LotteryResult detail;
    MaskedModel init_model;
    OptimConfig retrain_cfg;  // resolved, for matched-sparsity evaluations
};

inline LotteryRunResult run_lottery_experiment(const LabeledDataset& train,
                                               const LabeledDataset& val,
                                               const LotteryRunOptions& opt) {
    MaskedModel model;
    if (opt.logistic) {
        model = MaskedModel::logistic(train.feature_dim());
    } else {
        std::vector<std::size_t> layers{train.feature_dim()};
        layers.insert(layers.end(), opt.hidden.begin(), opt.hidden.end());
        layers.push_back(static_cast<std::size_t>(train.num_classes));
        model = MaskedModel::mlp(layers);
    }
    SeededRng init(SeededRng::mix(opt.seed, 0xC0DE));
    model.init_weights(init);

    LotteryConfig cfg = opt.lottery;
    cfg.optim.seed = opt.seed;
    OptimConfig retrain = opt.retrain;
    retrain.seed = SeededRng::mix(opt.seed, 0x7E7);

    LotteryRunResult out;
    out.detail = run_lottery(model, train, val, cfg);
    out.rounds = out.detail.rounds;
    out.survivors = out.detail.mask.active_count();
    out.final_sparsity = out.detail.mask.sparsity();
    out.ticket_accuracy =
        evaluate_ticket(out.detail.mask, out.detail.rewind_point, model, train, val, retrain);
    out.dense_accuracy = evaluate_ticket(RelaxedMask::ones(model.weight_count()),
                                         out.detail.rewind_point, model, train, val, retrain);
    out.init_model = std::move(model);
    out.retrain_cfg = retrain;
    return out;
}

/// Soft threshold vs hard fixed-fraction vs sigmoid reparameterization, all
/// on the same initialization and budgets. The hard variant's per-round
/// fraction is chosen so its final survivor count matches the soft run; the
/// sigmoid baseline is additionally scored at the soft run's survivor count
/// by keeping its top-valued coordinates.
struct AblationResult {
    LotteryRunResult soft;
    LotteryRunResult hard;
    LotteryRunResult sigmoid;
    double hard_matched_fraction = 0.0;
    double concave_ticket_at_sigmoid_sparsity = 0.0;
    double sigmoid_ticket_at_soft_sparsity = 0.0;
};

inline AblationResult run_lottery_ablation(const LabeledDataset& train,
                                           const LabeledDataset& val,
                                           const LotteryRunOptions& base) {
    AblationResult out;
    LotteryRunOptions opt = base;
    opt.lottery.strategy = PruneStrategy::SoftThreshold;
    out.soft = run_lottery_experiment(train, val, opt);

    const auto d = static_cast<double>(out.soft.init_model.weight_count());
    const double keep_ratio =
        std::max(1.0, static_cast<double>(out.soft.survivors)) / std::max(1.0, d);
    opt = base;
    opt.lottery.strategy = PruneStrategy::HardFraction;
    opt.lottery.prune_fraction = std::clamp(
        1.0 - std::pow(keep_ratio, 1.0 / static_cast<double>(base.lottery.rounds)), 1e-6,
        1.0 - 1e-6);
    out.hard_matched_fraction = opt.lottery.prune_fraction;
    out.hard = run_lottery_experiment(train, val, opt);

    opt = base;
    opt.lottery.strategy = PruneStrategy::SigmoidReparam;
    out.sigmoid = run_lottery_experiment(train, val, opt);

    // matched-sparsity cross evaluations
    out.concave_ticket_at_sigmoid_sparsity = evaluate_ticket(
        keep_top(out.soft.detail.last_trained_mask, out.sigmoid.survivors),
        out.soft.detail.rewind_point, out.soft.init_model, train, val, out.soft.retrain_cfg);
    out.sigmoid_ticket_at_soft_sparsity = evaluate_ticket(
        keep_top(out.sigmoid.detail.last_trained_mask, out.soft.survivors),
        out.sigmoid.detail.rewind_point, out.sigmoid.init_model, train, val,
        out.sigmoid.retrain_cfg);
    return out;
}

inline CsvWriter lottery_rounds_csv(const std::vector<RoundReport>& rounds) {
    std::vector<std::string> header = {"round", "survivors", "sparsity", "val_accuracy",
                                       "objective"};
    for (int b = 0; b < 10; ++b) header.push_back("hist_" + std::to_string(b));
    CsvWriter csv(header);
    for (const auto& r : rounds) {
        std::vector<std::string> row = {std::to_string(r.round), std::to_string(r.survivors),
                                        fmt_double(r.sparsity), fmt_double(r.val_accuracy),
                                        fmt_double(r.objective)};
        for (auto count : r.mask_hist) row.push_back(std::to_string(count));
        csv.add_row(std::move(row));
    }
    return csv;
}

// ---------------------------------------------------------------------------
// Bound verification over randomized planted instances
// ---------------------------------------------------------------------------

struct VerifyBoundsOptions {
    std::size_t l1_trials = 1000;
    std::size_t pgd_checks = 100;  // closed form vs PGD agreement, first trials
    std::size_t log_trials = 200;
    std::size_t d_min = 2, d_max = 12;
    std::size_t log_d_max = 6;
    double gamma_min = 0.5, gamma_max = 4.0;
    double lambda_min = 0.01, lambda_max = 0.5;
    double epsilon = kDefaultEpsilon;
    double grid_q = 0.01;
    bool uniqueness_conditioned = true;  // cap lambda so the uniqueness premise holds on log trials
    std::uint64_t seed = 7;
};

struct VerifyBoundsOutcome {
    std::vector<std::pair<std::string, BoundCertificate>> certificates;  // kind, cert
    std::size_t base_bound_failures = 0;
    std::size_t pgd_checked = 0;
    double pgd_max_diff = 0.0;
    std::size_t sharpened_applicable = 0;
    std::size_t sharpened_violations = 0;  // reported, never asserted
    std::size_t nonbinary_zero_phi = 0;
    std::size_t uniqueness_applicable = 0;
    std::size_t uniqueness_failures = 0;
    std::size_t dims_total = 0;

    bool ok() const { return base_bound_failures == 0 && uniqueness_failures == 0; }
};

namespace detail {

inline void tally(VerifyBoundsOutcome& out, const std::string& kind,
                  const BoundCertificate& cert, bool m_star_nonbinary_phi_check) {
    out.base_bound_failures += cert.base_bound_holds ? 0 : 1;
    if (cert.sharpened_applicable) {
        out.sharpened_applicable += 1;
        out.sharpened_violations += cert.sharpened_bound_holds ? 0 : 1;
        if (m_star_nonbinary_phi_check && !cert.m_star_binary && !(cert.phi > 0.0))
            out.nonbinary_zero_phi += 1;
    }
    if (cert.uniqueness_applicable) {
        out.uniqueness_applicable += 1;
        out.uniqueness_failures += cert.uniqueness_holds ? 0 : 1;
    }
    out.certificates.emplace_back(kind, cert);
}

}  // namespace detail

inline VerifyBoundsOutcome run_verify_bounds(const VerifyBoundsOptions& opt) {
    VerifyBoundsOutcome out;
    SeededRng rng(opt.seed);

    for (std::size_t trial = 0; trial < opt.l1_trials; ++trial) {
        const std::size_t d = opt.d_min + rng.below(opt.d_max - opt.d_min + 1);
        const std::size_t k = 1 + rng.below(d);
        const double gamma = rng.uniform(opt.gamma_min, opt.gamma_max);
        const double lambda = rng.uniform(opt.lambda_min, opt.lambda_max);
        const PlantedInstance inst = make_planted(d, k, gamma, lambda, rng);
        const RegularizerSpec reg = RegularizerSpec::l1(lambda);
        const Vec m_star = solve_relaxed_l1_closed_form(inst, lambda);
        detail::tally(out, "l1-closed-form", certify(inst, reg, m_star), false);
        out.dims_total += d;

        if (trial < opt.pgd_checks) {
            const Vec m_pgd = solve_relaxed_pgd(inst, reg);
            double diff = 0.0;
            for (std::size_t i = 0; i < d; ++i)
                diff = std::max(diff, std::abs(m_pgd[i] - m_star[i]));
            out.pgd_max_diff = std::max(out.pgd_max_diff, diff);
            out.pgd_checked += 1;
        }
    }

    for (std::size_t trial = 0; trial < opt.log_trials; ++trial) {
        const std::size_t span = opt.log_d_max - opt.d_min + 1;
        const std::size_t d = opt.d_min + rng.below(span);
        const std::size_t k = 1 + rng.below(d);
        const double gamma = rng.uniform(opt.gamma_min, opt.gamma_max);
        double lam_hi = opt.lambda_max;
        if (opt.uniqueness_conditioned)
            lam_hi = std::min(lam_hi,
                              0.99 * gamma / (4.0 * std::sqrt(static_cast<double>(k))));
        const double lambda = rng.uniform(opt.lambda_min, std::max(opt.lambda_min, lam_hi));
        const PlantedInstance inst = make_planted(d, k, gamma, lambda, rng);
        const RegularizerSpec reg = RegularizerSpec::log(opt.epsilon, lambda);

        const Vec grid = solve_relaxed_grid(inst, reg, opt.grid_q);
        // local refinement keeps the grid basin; the concave term caps the step
        const double curv =
            inst.gamma + lambda / (opt.epsilon * opt.epsilon *
                                   std::log((1.0 + opt.epsilon) / opt.epsilon));
        const Vec refined = solve_relaxed_pgd(inst, reg, grid, 1.0 / curv, 50000, 1e-12);
        detail::tally(out, "log-grid-pgd", certify(inst, reg, refined), true);
        out.dims_total += d;
    }
    return out;
}

inline CsvWriter certificates_csv(const VerifyBoundsOutcome& out) {
    CsvWriter csv({"kind", "k", "gamma", "lambda", "err_l2", "base_bound", "phi",
                   "sharpened_bound", "premise_holds", "base_bound_holds", "sharpened_applicable",
                   "sharpened_bound_holds", "uniqueness_applicable", "uniqueness_holds", "m_star_binary"});
    auto flag = [](bool b) { return b ? std::string("true") : std::string("false"); };
    for (const auto& [kind, c] : out.certificates)
        csv.add_row({kind, std::to_string(c.k), fmt_double(c.gamma), fmt_double(c.lambda),
                     fmt_double(c.err_l2), fmt_double(c.base_bound), fmt_double(c.phi),
                     fmt_double(c.sharpened_bound), flag(c.premise_holds), flag(c.base_bound_holds),
                     flag(c.sharpened_applicable), flag(c.sharpened_bound_holds), flag(c.uniqueness_applicable),
                     flag(c.uniqueness_holds), flag(c.m_star_binary)});
    return csv;
}

}  // namespace softmask
