#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>

#include "softmask/config.hpp"
#include "softmask/csv.hpp"
#include "softmask/data.hpp"
#include "softmask/experiments.hpp"
#include "softmask/fetch.hpp"
#include "softmask/graymap.hpp"
#include "softmask/lottery.hpp"

namespace fs = std::filesystem;
using namespace softmask;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRunFailure = 2;
constexpr int kExitBoundFailure = 3;

struct DataFlags {
    std::string images_path;
    std::string labels_path;
    std::size_t pool_per_class = 400;
    double noise = 0.08;
    std::uint64_t corpus_seed = 64206;  // 0xFACE
    std::vector<int> digits = {0, 1};
    std::size_t per_class = 200;
    std::size_t train_per_class = 160;
    std::size_t val_per_class = 40;
    std::size_t side = 20;
};

void add_data_flags(CLI::App* cmd, DataFlags& flags) {
    cmd->add_option("--images", flags.images_path, "IDX image file (omit to use the synthetic corpus)");
    cmd->add_option("--labels", flags.labels_path, "IDX label file");
    cmd->add_option("--pool-per-class", flags.pool_per_class, "synthetic corpus images per digit");
    cmd->add_option("--noise", flags.noise, "synthetic corpus pixel noise");
    cmd->add_option("--corpus-seed", flags.corpus_seed, "synthetic corpus seed");
    cmd->add_option("--digits", flags.digits, "digit classes to keep")->delimiter(',');
    cmd->add_option("--per-class", flags.per_class, "samples drawn per class");
    cmd->add_option("--train-per-class", flags.train_per_class, "training samples per class");
    cmd->add_option("--val-per-class", flags.val_per_class, "validation samples per class");
    cmd->add_option("--side", flags.side, "target image side length");
}

LabeledDataset resolve_corpus(const DataFlags& flags) {
    if (!flags.images_path.empty() || !flags.labels_path.empty()) {
        if (flags.images_path.empty() || flags.labels_path.empty())
            throw CLI::ValidationError("--images and --labels must be given together");
        return load_idx(flags.images_path, flags.labels_path);
    }
    SeededRng rng(flags.corpus_seed);
    std::vector<int> labels;
    const idx::Images img = synthetic_digit_images(flags.pool_per_class, 28, flags.noise,
                                                   rng, &labels, flags.digits);
    int max_label = 1;
    for (int y : labels) max_label = std::max(max_label, y);
    return dataset_from_idx_images(img, labels, max_label + 1);
}

MnistSubsetSpec subset_of(const DataFlags& flags) {
    MnistSubsetSpec spec;
    spec.digits = flags.digits;
    spec.per_class = flags.per_class;
    spec.train_per_class = flags.train_per_class;
    spec.val_per_class = flags.val_per_class;
    spec.side = flags.side;
    return spec;
}

void ensure_out_dir(const std::string& dir) {
    if (dir.empty()) throw CLI::ValidationError("--out-dir is required");
    fs::create_directories(dir);
}

/// Pre-scan for --config so file values become flag defaults; explicit flags
/// still win because CLI11 parses afterwards.
KeyValueConfig preload_config(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--config") return KeyValueConfig::from_file(argv[i + 1]);
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg.rfind("--config=", 0) == 0)
            return KeyValueConfig::from_file(arg.substr(9));
    }
    return {};
}

const std::set<std::string> kConfigKeys = {
    "data.images", "data.labels", "data.pool_per_class", "data.noise", "data.corpus_seed",
    "data.per_class", "data.train_per_class", "data.val_per_class", "data.side",
    "optim.learning_rate", "optim.momentum", "optim.weight_decay", "optim.epochs",
    "optim.batch_size", "optim.mask_lr_scale",
    "sweep.alpha", "sweep.epsilon", "sweep.mask_epochs",
    "lottery.rounds", "lottery.alpha", "lottery.lambda", "lottery.epsilon",
    "lottery.regularizer", "lottery.beta", "lottery.retrain_epochs",
};

void apply_config_data(const KeyValueConfig& cfg, DataFlags& flags) {
    flags.images_path = cfg.get_string("data.images", flags.images_path);
    flags.labels_path = cfg.get_string("data.labels", flags.labels_path);
    flags.pool_per_class = cfg.get_size("data.pool_per_class", flags.pool_per_class);
    flags.noise = cfg.get_double("data.noise", flags.noise);
    flags.corpus_seed = cfg.get_size("data.corpus_seed", flags.corpus_seed);
    flags.per_class = cfg.get_size("data.per_class", flags.per_class);
    flags.train_per_class = cfg.get_size("data.train_per_class", flags.train_per_class);
    flags.val_per_class = cfg.get_size("data.val_per_class", flags.val_per_class);
    flags.side = cfg.get_size("data.side", flags.side);
}

void apply_config_optim(const KeyValueConfig& cfg, OptimConfig& optim) {
    optim.learning_rate = cfg.get_double("optim.learning_rate", optim.learning_rate);
    optim.momentum = cfg.get_double("optim.momentum", optim.momentum);
    optim.weight_decay = cfg.get_double("optim.weight_decay", optim.weight_decay);
    optim.epochs = cfg.get_size("optim.epochs", optim.epochs);
    optim.batch_size = cfg.get_size("optim.batch_size", optim.batch_size);
    optim.mask_lr_scale = cfg.get_double("optim.mask_lr_scale", optim.mask_lr_scale);
}

double cfg_or(const KeyValueConfig& cfg, const std::string& key, double fallback) {
    return cfg.get_double(key, fallback);
}

int cmd_sweep(const KeyValueConfig& file_cfg, CLI::App* cmd, const DataFlags& data_flags,
              const std::string& out_dir, const std::vector<std::uint64_t>& seeds,
              const std::vector<double>& lambda_grid, const std::string& regularizer,
              double epsilon, double alpha, std::size_t mask_epochs, bool mask_intercept,
              std::size_t workers, bool record_golden) {
    ensure_out_dir(out_dir);
    const LabeledDataset corpus = resolve_corpus(data_flags);

    SweepOptions opt;
    if (!seeds.empty()) opt.seeds = seeds;
    if (!lambda_grid.empty()) opt.lambda_grid = lambda_grid;
    if (cmd->count("--regularizer")) {
        if (regularizer == "l1")
            opt.methods = {"plain", "subgrad-l1", "mask-l1"};
        else
            opt.methods = {"plain", "subgrad-l1", "mask-log"};
    }
    opt.epsilon = cfg_or(file_cfg, "sweep.epsilon", epsilon);
    opt.alpha = cfg_or(file_cfg, "sweep.alpha", alpha);
    opt.mask_intercept = mask_intercept;
    opt.workers = workers;
    apply_config_optim(file_cfg, opt.dense_optim);
    opt.mask_optim.epochs = mask_epochs;

    const SweepResult result = run_sweep(corpus, subset_of(data_flags), opt);
    sweep_csv(result).write_file(out_dir + "/sweep.csv");
    sweep_summary_csv(result).write_file(out_dir + "/sweep_summary.csv");

    std::size_t failures = 0;
    for (const auto& row : result.rows) failures += !row.error.empty();
    std::cout << "sweep: " << result.rows.size() << " runs, " << failures
              << " failed; results in " << out_dir << "/sweep.csv\n";

    if (record_golden) {
        std::ofstream golden(out_dir + "/golden_sweep.txt");
        for (const auto& r : result.rows)
            if (r.error.empty())
                golden << r.method << " " << fmt_double(r.lambda) << " " << r.seed << " "
                       << r.nonzeros << " " << fmt_double(r.val_accuracy) << "\n";
    }
    return failures == 0 ? kExitOk : kExitRunFailure;
}

int cmd_lottery(const KeyValueConfig& file_cfg, const DataFlags& data_flags,
                const std::string& out_dir, const std::string& arch,
                const std::vector<std::size_t>& hidden, LotteryRunOptions opt,
                const std::string& regularizer, double lambda, double epsilon,
                const std::string& strategy, bool ablation, bool record_golden) {
    ensure_out_dir(out_dir);
    const LabeledDataset corpus = resolve_corpus(data_flags);
    SeededRng subset_rng(SeededRng::mix(opt.seed, 0xDA7A));
    const auto [train, val] = make_subset(corpus, subset_of(data_flags), subset_rng);

    opt.logistic = arch == "logistic";
    opt.hidden = hidden;
    opt.lottery.reg = regularizer == "l1" ? RegularizerSpec::l1(lambda)
                                          : RegularizerSpec::log(epsilon, lambda);
    apply_config_optim(file_cfg, opt.lottery.optim);

    if (ablation) {
        const AblationResult ab = run_lottery_ablation(train, val, opt);
        lottery_rounds_csv(ab.soft.rounds).write_file(out_dir + "/lottery_soft_rounds.csv");
        lottery_rounds_csv(ab.hard.rounds).write_file(out_dir + "/lottery_hard_rounds.csv");
        lottery_rounds_csv(ab.sigmoid.rounds)
            .write_file(out_dir + "/lottery_sigmoid_rounds.csv");
        CsvWriter summary({"variant", "survivors", "sparsity", "ticket_accuracy",
                           "dense_accuracy", "note"});
        summary.add_row({"soft", std::to_string(ab.soft.survivors),
                         fmt_double(ab.soft.final_sparsity),
                         fmt_double(ab.soft.ticket_accuracy),
                         fmt_double(ab.soft.dense_accuracy), ""});
        summary.add_row({"hard", std::to_string(ab.hard.survivors),
                         fmt_double(ab.hard.final_sparsity),
                         fmt_double(ab.hard.ticket_accuracy),
                         fmt_double(ab.hard.dense_accuracy),
                         "fraction " + fmt_double(ab.hard_matched_fraction)});
        summary.add_row({"sigmoid", std::to_string(ab.sigmoid.survivors),
                         fmt_double(ab.sigmoid.final_sparsity),
                         fmt_double(ab.sigmoid.ticket_accuracy),
                         fmt_double(ab.sigmoid.dense_accuracy),
                         "matched-to-soft ticket " +
                             fmt_double(ab.sigmoid_ticket_at_soft_sparsity)});
        summary.write_file(out_dir + "/lottery_summary.csv");
        std::cout << "ablation: soft " << ab.soft.ticket_accuracy << " @ "
                  << ab.soft.survivors << " | hard " << ab.hard.ticket_accuracy << " @ "
                  << ab.hard.survivors << " | sigmoid " << ab.sigmoid.ticket_accuracy
                  << " @ " << ab.sigmoid.survivors << "\n";
        return kExitOk;
    }

    if (strategy == "hard")
        opt.lottery.strategy = PruneStrategy::HardFraction;
    else if (strategy == "imp")
        opt.lottery.strategy = PruneStrategy::Imp;
    else if (strategy == "sigmoid")
        opt.lottery.strategy = PruneStrategy::SigmoidReparam;
    else
        opt.lottery.strategy = PruneStrategy::SoftThreshold;

    const LotteryRunResult res = run_lottery_experiment(train, val, opt);
    lottery_rounds_csv(res.rounds).write_file(out_dir + "/lottery_rounds.csv");
    CsvWriter summary(
        {"strategy", "rounds", "survivors", "sparsity", "ticket_accuracy", "dense_accuracy"});
    summary.add_row({strategy, std::to_string(opt.lottery.rounds),
                     std::to_string(res.survivors), fmt_double(res.final_sparsity),
                     fmt_double(res.ticket_accuracy), fmt_double(res.dense_accuracy)});
    summary.write_file(out_dir + "/lottery_summary.csv");
    std::cout << "lottery: sparsity " << res.final_sparsity << " (" << res.survivors
              << " survivors), ticket " << res.ticket_accuracy << " vs dense "
              << res.dense_accuracy << "\n";
    if (record_golden) {
        std::ofstream golden(out_dir + "/golden_lottery.txt");
        golden << res.survivors << " " << fmt_double(res.ticket_accuracy) << " "
               << fmt_double(res.dense_accuracy) << "\n";
    }
    return kExitOk;
}

int cmd_verify_bounds(const VerifyBoundsOptions& opt, const std::string& out_dir) {
    ensure_out_dir(out_dir);
    const VerifyBoundsOutcome out = run_verify_bounds(opt);
    certificates_csv(out).write_file(out_dir + "/certificates.csv");
    std::cout << "verify-bounds: " << out.certificates.size() << " instances\n"
              << "  base-bound failures: " << out.base_bound_failures << "\n"
              << "  pgd-vs-closed-form max |diff|: " << out.pgd_max_diff << " over "
              << out.pgd_checked << " instances\n"
              << "  sharpened-bound violations (stated form): " << out.sharpened_violations << "/"
              << out.sharpened_applicable << " (reported, see certificates.csv)\n"
              << "  binary uniqueness: " << out.uniqueness_failures << " failures over "
              << out.uniqueness_applicable << " applicable instances\n";
    return out.ok() ? kExitOk : kExitBoundFailure;
}

int cmd_mask_view(const std::string& mask_path, std::size_t side, const std::string& out_path,
                  const std::string& overlay_path) {
    const Vec mask = read_mask_file(mask_path);
    std::string pgm;
    if (overlay_path.empty()) {
        pgm = render_mask_pgm(mask, side);
    } else {
        const auto [image, image_side] = read_pgm(overlay_path);
        if (image_side != side)
            throw std::invalid_argument("overlay image is " + std::to_string(image_side) +
                                        " wide, expected " + std::to_string(side));
        pgm = render_overlay_pgm(mask, image, side);
    }
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error(out_path + ": cannot open for writing");
    out << pgm;
    std::cout << "wrote " << out_path << "\n";
    return kExitOk;
}

int cmd_fetch_mnist(const std::string& out_dir, const std::string& host,
                    const std::string& prefix) {
    ensure_out_dir(out_dir);
    httplib::Client client(host);
    client.set_follow_location(true);
    client.set_read_timeout(120, 0);
    for (const MnistFileInfo& info : mnist_files()) {
        const std::string target = out_dir + "/" + info.raw_name;
        if (fs::exists(target) && fs::file_size(target) == info.raw_size) {
            std::cout << info.raw_name << ": already present\n";
            continue;
        }
        std::cout << "fetching " << info.gz_name << " ... " << std::flush;
        const auto res = client.Get(prefix + info.gz_name);
        if (!res || res->status != 200)
            throw std::runtime_error(std::string("download failed for ") + info.gz_name +
                                     (res ? " (status " + std::to_string(res->status) + ")"
                                          : " (no response)"));
        const std::vector<unsigned char> raw =
            gunzip({res->body.begin(), res->body.end()});
        if (raw.size() != info.raw_size)
            throw std::runtime_error(std::string(info.raw_name) + ": inflated to " +
                                     std::to_string(raw.size()) + " bytes, expected " +
                                     std::to_string(info.raw_size));
        write_bytes(target, raw);
        std::cout << raw.size() << " bytes ok\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"soft mask pruning with concave regularizers"};
    app.require_subcommand(1);

    KeyValueConfig file_cfg;
    try {
        file_cfg = preload_config(argc, argv);
        file_cfg.validate_keys(kConfigKeys);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    std::string config_path, out_dir;
    bool record_golden = false;

    // ---- sweep ----
    auto* sweep = app.add_subcommand("sweep", "lambda sweep over the two-class task");
    DataFlags sweep_data;
    apply_config_data(file_cfg, sweep_data);
    std::vector<std::uint64_t> sweep_seeds;
    std::vector<double> lambda_grid;
    std::string sweep_reg = "log";
    double sweep_epsilon = kDefaultEpsilon, sweep_alpha = 0.02;
    std::size_t mask_epochs = file_cfg.get_size("sweep.mask_epochs", 500);
    std::size_t workers = 0;
    bool mask_intercept = false;
    sweep->add_option("--config", config_path, "key=value config file");
    sweep->add_option("--out-dir", out_dir, "output directory")->required();
    sweep->add_option("--seed", sweep_seeds, "seed list")->delimiter(',');
    sweep->add_option("--lambda-grid", lambda_grid, "lambda grid")->delimiter(',');
    sweep->add_option("--regularizer", sweep_reg, "restrict mask method: l1|log")
        ->check(CLI::IsMember({"l1", "log"}));
    sweep->add_option("--epsilon", sweep_epsilon, "log regularizer epsilon");
    sweep->add_option("--alpha", sweep_alpha, "pruning threshold");
    sweep->add_option("--mask-epochs", mask_epochs, "mask training epochs");
    sweep->add_option("--workers", workers, "worker pool size (0 = cores)");
    sweep->add_flag("--mask-intercept", mask_intercept,
                    "mask the intercept column instead of a separate bias");
    sweep->add_flag("--record-golden", record_golden, "write golden value file");
    add_data_flags(sweep, sweep_data);

    // ---- lottery ----
    auto* lottery = app.add_subcommand("lottery", "iterative pruning rounds with rewinding");
    DataFlags lottery_data;
    lottery_data.digits = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    lottery_data.pool_per_class = 150;
    lottery_data.noise = 0.12;
    lottery_data.per_class = 100;
    lottery_data.train_per_class = 80;
    lottery_data.val_per_class = 20;
    apply_config_data(file_cfg, lottery_data);
    LotteryRunOptions lopt;
    lopt.lottery.rounds = file_cfg.get_size("lottery.rounds", 3);
    lopt.lottery.optim.epochs = 40;
    lopt.lottery.optim.mask_lr_scale = 5.0;
    lopt.retrain.epochs = file_cfg.get_size("lottery.retrain_epochs", 40);
    std::string arch = "mlp", lottery_reg = "log", strategy = "soft";
    std::vector<std::size_t> hidden = {32};
    double lottery_lambda = file_cfg.get_double("lottery.lambda", 3e-3);
    double lottery_epsilon = file_cfg.get_double("lottery.epsilon", kDefaultEpsilon);
    bool ablation = false;
    lottery->add_option("--config", config_path, "key=value config file");
    lottery->add_option("--out-dir", out_dir, "output directory")->required();
    lottery->add_option("--arch", arch, "model: mlp|logistic")
        ->check(CLI::IsMember({"mlp", "logistic"}));
    lottery->add_option("--hidden", hidden, "MLP hidden layer sizes")->delimiter(',');
    lottery->add_option("--rounds", lopt.lottery.rounds, "pruning rounds");
    lottery->add_option("--alpha", lopt.lottery.alpha, "pruning threshold");
    lottery->add_option("--regularizer", lottery_reg, "l1|log")
        ->check(CLI::IsMember({"l1", "log"}));
    lottery->add_option("--lambda", lottery_lambda, "regularizer strength");
    lottery->add_option("--epsilon", lottery_epsilon, "log regularizer epsilon");
    lottery->add_option("--strategy", strategy, "soft|hard|imp|sigmoid")
        ->check(CLI::IsMember({"soft", "hard", "imp", "sigmoid"}));
    lottery->add_option("--hard-prune-p", lopt.lottery.prune_fraction,
                        "fixed per-round prune fraction");
    lottery->add_option("--beta", lopt.lottery.sigmoid.beta_final, "sigmoid beta final");
    lottery->add_option("--epochs", lopt.lottery.optim.epochs, "epochs per round");
    lottery->add_option("--batch-size", lopt.lottery.optim.batch_size, "batch size");
    lottery->add_option("--mask-lr-scale", lopt.lottery.optim.mask_lr_scale,
                        "mask learning-rate scale");
    lottery->add_option("--rewind-epoch", lopt.lottery.rewind_epoch,
                        "rewind to this round-1 epoch instead of the initialization");
    lottery->add_flag("--allow-regrowth", lopt.lottery.allow_regrowth,
                      "pruned coordinates may regrow between rounds");
    lottery->add_option("--retrain-epochs", lopt.retrain.epochs, "ticket retraining epochs");
    lottery->add_option("--seed", lopt.seed, "run seed");
    lottery->add_flag("--ablation", ablation, "run soft vs matched-hard vs sigmoid");
    lottery->add_flag("--record-golden", record_golden, "write golden value file");
    add_data_flags(lottery, lottery_data);

    // ---- verify-bounds ----
    auto* verify = app.add_subcommand("verify-bounds", "certify the recovery error bounds");
    VerifyBoundsOptions vopt;
    verify->add_option("--out-dir", out_dir, "output directory")->required();
    verify->add_option("--trials", vopt.l1_trials, "l1 closed-form instances");
    verify->add_option("--log-trials", vopt.log_trials, "log grid+pgd instances");
    verify->add_option("--pgd-checks", vopt.pgd_checks, "pgd agreement checks");
    verify->add_option("--d-min", vopt.d_min, "smallest dimension");
    verify->add_option("--d-max", vopt.d_max, "largest dimension (l1)");
    verify->add_option("--log-d-max", vopt.log_d_max, "largest dimension (log grid)");
    verify->add_option("--gamma-min", vopt.gamma_min, "strong convexity range low");
    verify->add_option("--gamma-max", vopt.gamma_max, "strong convexity range high");
    verify->add_option("--lambda-min", vopt.lambda_min, "lambda range low");
    verify->add_option("--lambda-max", vopt.lambda_max, "lambda range high");
    verify->add_option("--epsilon", vopt.epsilon, "log regularizer epsilon");
    verify->add_option("--grid-q", vopt.grid_q, "grid step");
    verify->add_option("--seed", vopt.seed, "trial seed");
    bool no_uniqueness_cap = false;
    verify->add_flag("--no-uniqueness-conditioning", no_uniqueness_cap,
                     "do not cap lambda to the uniqueness premise on log trials");

    // ---- mask-view ----
    auto* view = app.add_subcommand("mask-view", "render a mask as a P2 graymap");
    std::string mask_path, view_out = "mask.pgm", overlay_path;
    std::size_t view_side = 20;
    view->add_option("--mask", mask_path, "mask file, one value per line")->required();
    view->add_option("--side", view_side, "image side length")->required();
    view->add_option("--out", view_out, "output graymap path");
    view->add_option("--overlay", overlay_path, "P2 image to mask (masked-digit overlay)");

    // ---- fetch-mnist ----
    auto* fetch = app.add_subcommand("fetch-mnist", "download and unpack the IDX corpus");
    std::string fetch_host = "http://ossci-datasets.s3.amazonaws.com";
    std::string fetch_prefix = "/mnist/";
    fetch->add_option("--out-dir", out_dir, "output directory")->required();
    fetch->add_option("--host", fetch_host, "download host");
    fetch->add_option("--prefix", fetch_prefix, "path prefix");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (sweep->parsed())
            return cmd_sweep(file_cfg, sweep, sweep_data, out_dir, sweep_seeds, lambda_grid,
                             sweep_reg, sweep_epsilon, sweep_alpha, mask_epochs,
                             mask_intercept, workers, record_golden);
        if (lottery->parsed())
            return cmd_lottery(file_cfg, lottery_data, out_dir, arch, hidden, lopt,
                               lottery_reg, lottery_lambda, lottery_epsilon, strategy,
                               ablation, record_golden);
        if (verify->parsed()) {
            vopt.uniqueness_conditioned = !no_uniqueness_cap;
            return cmd_verify_bounds(vopt, out_dir);
        }
        if (view->parsed()) return cmd_mask_view(mask_path, view_side, view_out, overlay_path);
        if (fetch->parsed()) return cmd_fetch_mnist(out_dir, fetch_host, fetch_prefix);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRunFailure;
    }
    return kExitUsage;
}
