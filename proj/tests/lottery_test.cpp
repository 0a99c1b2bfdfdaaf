#include <gtest/gtest.h>

#include <cmath>

#include "softmask/lottery.hpp"
#include "test_util.hpp"

namespace softmask {
namespace {

RelaxedMask mask_of(const Vec& values) {
    RelaxedMask m(values.size(), 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) m.set(i, values[i]);
    return m;
}

TEST(ThresholdPrune, StrictInequalityAtAlpha) {
    const RelaxedMask m = mask_of({0.5, 0.009, 0.02});
    const RelaxedMask out = threshold_prune(m, 0.01);
    EXPECT_EQ(out.value(0), 0.5);
    EXPECT_EQ(out.value(1), 0.0);
    EXPECT_TRUE(out.is_frozen(1));
    EXPECT_EQ(out.value(2), 0.02);
    EXPECT_FALSE(out.is_frozen(2));

    // a value exactly at alpha survives
    const RelaxedMask exact = threshold_prune(mask_of({0.01}), 0.01);
    EXPECT_EQ(exact.value(0), 0.01);
    EXPECT_FALSE(exact.is_frozen(0));
}

TEST(ThresholdPrune, ValidatesAlphaAndIsIdempotent) {
    const RelaxedMask m = mask_of({0.5, 0.3});
    EXPECT_THROW(threshold_prune(m, 0.0), std::invalid_argument);
    EXPECT_THROW(threshold_prune(m, 1.0), std::invalid_argument);
    const RelaxedMask big = threshold_prune(mask_of({0.5, 0.3, 0.999}), 0.999);
    EXPECT_EQ(big.active_count(), 1u);

    SeededRng rng(60);
    Vec values(20);
    for (auto& v : values) v = rng.uniform();
    const RelaxedMask once = threshold_prune(mask_of(values), 0.3);
    const RelaxedMask twice = threshold_prune(once, 0.3);
    EXPECT_EQ(once.values(), twice.values());
    for (std::size_t i = 0; i < once.size(); ++i)
        EXPECT_EQ(once.is_frozen(i), twice.is_frozen(i));
}

TEST(ThresholdPrune, RegrowthVariantLeavesCoordinatesTrainable) {
    const RelaxedMask out = threshold_prune(mask_of({0.005, 0.5}), 0.01, false);
    EXPECT_EQ(out.value(0), 0.0);
    EXPECT_FALSE(out.is_frozen(0));
}

TEST(HardPrune, RemovesSmallestFraction) {
    const RelaxedMask out = hard_prune(mask_of({0.9, 0.1, 0.5, 0.3}), 0.5);
    EXPECT_FALSE(out.is_frozen(0));
    EXPECT_TRUE(out.is_frozen(1));
    EXPECT_FALSE(out.is_frozen(2));
    EXPECT_TRUE(out.is_frozen(3));
}

TEST(HardPrune, TieBreaksTowardsLowestIndex) {
    const RelaxedMask out = hard_prune(mask_of({0.2, 0.2, 0.8}), 1.0 / 3.0);
    EXPECT_TRUE(out.is_frozen(0));
    EXPECT_FALSE(out.is_frozen(1));
    EXPECT_FALSE(out.is_frozen(2));
}

TEST(HardPrune, TinyFractionIsANoOp) {
    const RelaxedMask m = mask_of({0.9, 0.1, 0.5, 0.3});
    const RelaxedMask out = hard_prune(m, 0.2);  // floor(0.8) = 0 coordinates
    EXPECT_EQ(out.active_count(), 4u);
    EXPECT_THROW(hard_prune(m, 0.0), std::invalid_argument);
    EXPECT_THROW(hard_prune(m, 1.0), std::invalid_argument);
}

TEST(PruneOps, CommuteWithCoordinatePermutation) {
    SeededRng rng(61);
    Vec values(12);
    for (auto& v : values) v = rng.uniform();
    std::vector<std::size_t> perm(12);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    Vec permuted(12);
    for (std::size_t i = 0; i < 12; ++i) permuted[i] = values[perm[i]];

    const RelaxedMask direct = threshold_prune(mask_of(values), 0.4);
    const RelaxedMask via_perm = threshold_prune(mask_of(permuted), 0.4);
    for (std::size_t i = 0; i < 12; ++i)
        EXPECT_EQ(via_perm.value(i), direct.value(perm[i]));
}

TEST(ImpPrune, MagnitudeRanking) {
    const RelaxedMask all = RelaxedMask::ones(4);
    const RelaxedMask out = imp_prune({0.5, -0.1, 0.3, -0.7}, all, 0.5);
    EXPECT_EQ(out.value(0), 1.0);
    EXPECT_EQ(out.value(1), 0.0);
    EXPECT_EQ(out.value(2), 0.0);
    EXPECT_EQ(out.value(3), 1.0);
}

TEST(ImpPrune, PrunedCoordinatesLeaveThePool) {
    RelaxedMask m = RelaxedMask::ones(4);
    m.freeze_zero(0);
    // pool is {1,2,3}; keep floor(0.5*3) = 1, drop the two smallest
    const RelaxedMask out = imp_prune({9.0, 0.2, 0.4, 0.3}, m, 0.5);
    EXPECT_TRUE(out.is_frozen(0));
    EXPECT_TRUE(out.is_frozen(1));
    EXPECT_EQ(out.value(2), 1.0);
    EXPECT_TRUE(out.is_frozen(3));
}

TEST(ImpPrune, GeometricScheduleArithmetic) {
    // floor(0.8^t * 100): 100 -> 80 -> 64 -> 51
    SeededRng rng(62);
    Vec w(100);
    for (auto& x : w) x = rng.uniform(-1.0, 1.0);
    RelaxedMask m = RelaxedMask::ones(100);
    const std::size_t expected[] = {80, 64, 51};
    for (std::size_t round = 0; round < 3; ++round) {
        m = imp_prune(w, m, 0.2);
        EXPECT_EQ(m.active_count(), expected[round]);
    }
}

TEST(Checkpoint, SnapshotRestoreRoundTrip) {
    SeededRng rng(63);
    MaskedModel model = MaskedModel::mlp({4, 3, 2});
    model.init_weights(rng);
    const Checkpoint ckpt = snapshot(model, "init");
    MaskedModel other = MaskedModel::mlp({4, 3, 2});
    restore(other, ckpt);
    EXPECT_EQ(other.weights(), model.weights());
    EXPECT_EQ(other.biases(), model.biases());
    MaskedModel wrong = MaskedModel::logistic(3);
    EXPECT_THROW(restore(wrong, ckpt), std::invalid_argument);
}

LotteryConfig quick_config() {
    LotteryConfig cfg;
    cfg.rounds = 2;
    cfg.alpha = 0.02;
    cfg.optim.epochs = 40;
    cfg.optim.full_batch = true;
    cfg.optim.weight_decay = 0.0;
    cfg.reg = RegularizerSpec::log(0.1, 1e-3);
    return cfg;
}

TEST(RunLottery, DegenerateConfigKeepsEverything) {
    const LabeledDataset data = testutil::separable_toy();
    MaskedModel model = MaskedModel::logistic(2);
    LotteryConfig cfg = quick_config();
    cfg.rounds = 1;
    cfg.alpha = 1e-6;
    cfg.reg = RegularizerSpec::l1(0.0);
    const LotteryResult res = run_lottery(model, data, data, cfg);
    EXPECT_EQ(res.mask.active_count(), 2u);
    EXPECT_EQ(res.rounds.back().sparsity, 0.0);
}

TEST(RunLottery, SurvivorsNeverIncrease) {
    SeededRng rng(64);
    const LabeledDataset data = testutil::random_binary(40, 10, rng);
    MaskedModel model = MaskedModel::logistic(10);
    SeededRng init(3);
    for (auto& w : model.weights()) w = 0.3 * init.normal();
    LotteryConfig cfg = quick_config();
    cfg.rounds = 4;
    cfg.reg = RegularizerSpec::log(0.1, 2e-2);
    const LotteryResult res = run_lottery(model, data, data, cfg);
    for (std::size_t t = 1; t < res.rounds.size(); ++t)
        EXPECT_LE(res.rounds[t].survivors, res.rounds[t - 1].survivors);
    for (const auto& rep : res.rounds)
        EXPECT_DOUBLE_EQ(rep.sparsity,
                         1.0 - static_cast<double>(rep.survivors) / 10.0);
}

TEST(RunLottery, ImpBaselineMatchesHandRolledLoop) {
    SeededRng rng(65);
    const LabeledDataset data = testutil::random_binary(40, 8, rng);
    MaskedModel model = MaskedModel::logistic(8);
    SeededRng init(4);
    for (auto& w : model.weights()) w = 0.3 * init.normal();

    LotteryConfig cfg = quick_config();
    cfg.strategy = PruneStrategy::Imp;
    cfg.rounds = 3;
    cfg.prune_fraction = 0.25;
    const LotteryResult res = run_lottery(model, data, data, cfg);

    // same harness by hand: rewind, train weights, magnitude prune
    MaskedModel hand = model;
    const Checkpoint init_ckpt = snapshot(hand, "init");
    RelaxedMask mask = RelaxedMask::ones(8);
    for (std::size_t t = 0; t < 3; ++t) {
        restore(hand, init_ckpt);
        hand.set_mask(mask);
        train_weights(hand, data, cfg.optim);
        mask = imp_prune(hand.weights(), hand.mask(), 0.25);
    }
    EXPECT_EQ(res.mask.values(), mask.values());
    EXPECT_EQ(res.rewind_point.weights, init_ckpt.weights);
}

TEST(RunLottery, EarlyRewindCapturesTheRequestedEpoch) {
    SeededRng rng(66);
    const LabeledDataset data = testutil::random_binary(30, 6, rng);
    MaskedModel model = MaskedModel::logistic(6);
    SeededRng init(5);
    for (auto& w : model.weights()) w = 0.3 * init.normal();

    LotteryConfig cfg = quick_config();
    cfg.rewind_epoch = 3;

    // reference: what the weights look like after exactly 3 epochs of round 1
    MaskedModel probe = model;
    probe.set_mask(RelaxedMask(6, 0.5));
    Vec at_epoch3;
    OptimConfig three = cfg.optim;
    three.epochs = 40;
    train_joint(probe, data, cfg.reg, three,
                [&](std::size_t epoch, const MaskedModel& m) {
                    if (epoch == 2) at_epoch3 = m.weights();
                });

    const LotteryResult res = run_lottery(model, data, data, cfg);
    EXPECT_EQ(res.rewind_point.tag, "epoch 3");
    EXPECT_EQ(res.rewind_point.weights, at_epoch3);

    LotteryConfig bad = cfg;
    bad.rewind_epoch = 1000;
    EXPECT_THROW(run_lottery(model, data, data, bad), LotteryError);
}

TEST(EvaluateTicket, AllOnesEqualsDenseBaseline) {
    SeededRng rng(67);
    const LabeledDataset data = testutil::random_binary(40, 6, rng);
    MaskedModel model = MaskedModel::logistic(6);
    SeededRng init(6);
    for (auto& w : model.weights()) w = 0.3 * init.normal();
    const Checkpoint ckpt = snapshot(model, "init");
    OptimConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 10;
    cfg.seed = 11;
    const double ticket =
        evaluate_ticket(RelaxedMask::ones(6), ckpt, model, data, data, cfg);
    MaskedModel dense = model;
    restore(dense, ckpt);
    train_weights(dense, data, cfg);
    EXPECT_EQ(ticket, dense.accuracy(data));
}

TEST(EvaluateTicket, AllZeroMaskPredictsMajorityRate) {
    SeededRng rng(68);
    DenseMatrix x(40, 4);
    std::vector<int> y(40);
    for (std::size_t i = 0; i < 40; ++i) {
        for (std::size_t j = 0; j < 4; ++j) x(i, j) = rng.uniform(-1.0, 1.0);
        y[i] = i % 2 == 0 ? 0 : 1;  // balanced
    }
    const LabeledDataset data = make_dataset(std::move(x), std::move(y), 2, Split::Train);
    MaskedModel model = MaskedModel::logistic(4);
    const Checkpoint ckpt = snapshot(model, "init");
    RelaxedMask zeros(4, 0.0);
    for (std::size_t i = 0; i < 4; ++i) zeros.freeze_zero(i);
    OptimConfig cfg;
    cfg.epochs = 20;
    cfg.full_batch = true;
    EXPECT_DOUBLE_EQ(evaluate_ticket(zeros, ckpt, model, data, data, cfg), 0.5);
}

TEST(LotteryConfig, Validation) {
    LotteryConfig cfg = quick_config();
    cfg.rounds = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = quick_config();
    cfg.alpha = 1.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace softmask
