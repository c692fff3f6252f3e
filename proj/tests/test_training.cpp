#include <cmath>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "tiae/training.hpp"
#include "tiae/transforms.hpp"
#include "toy_models.hpp"

using namespace tiae;
using namespace tiae::testing;

namespace {

Dataset toy_data(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Tensor images({n, 1, 6, 6});
    for (double& v : images.data()) {
        v = rng.uniform01();
    }
    return Dataset(images, std::vector<int>(n, 0));
}

TrainConfig toy_config(TrainMode mode, std::size_t updates) {
    TrainConfig cfg;
    cfg.mode = mode;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 3;
    cfg.total_updates = updates;
    cfg.seed = 11;
    cfg.grid = toy_grid();
    cfg.log_every = 1;
    return cfg;
}

struct ToyPair {
    Model enc;
    Model dec;
};

ToyPair toy_pair(std::uint64_t seed) {
    Rng rng(seed);
    Model enc(toy_encoder_spec(), rng);
    Model dec(toy_decoder_spec(), rng);
    return {std::move(enc), std::move(dec)};
}

// Scalar linear autoencoder on 1x1x1 images: y = c (a x + e) + d.
struct Scalar {
    double a, e, c, d;
};

ToyPair scalar_pair(Scalar s) {
    return {linear_model({1, 1, 1}, Tensor::matrix({{s.a}}), Tensor::vector({s.e})),
            linear_model({1}, Tensor::matrix({{s.c}}), Tensor::vector({s.d}), {1, 1, 1})};
}

} // namespace

TEST(Training, ZeroUpdatesLeavesModelsUnchanged) {
    const ToyPair t = toy_pair(1);
    const auto run = train_autoencoder(t.enc, t.dec, toy_data(5, 2), toy_config(TrainMode::Invariant, 0));
    EXPECT_EQ(run.encoder, t.enc);
    EXPECT_EQ(run.decoder, t.dec);
    EXPECT_TRUE(run.log.empty());
    EXPECT_EQ(run.state.step, 0u);
}

TEST(Training, MatchesClosedFormRecurrence) {
    const double x = 0.8;
    const double lr = 0.05;
    Scalar s{0.6, 0.1, -0.4, 0.2};
    const ToyPair t = scalar_pair(s);
    TrainConfig cfg;
    cfg.mode = TrainMode::Ordinary;
    cfg.augment = false;
    cfg.grid = TransformGrid::identity_only();
    cfg.learning_rate = lr;
    cfg.batch_size = 1;
    cfg.total_updates = 50;
    cfg.log_every = 1;
    const auto run = train_autoencoder(t.enc, t.dec, Dataset(Tensor({1, 1, 1, 1}, x)), cfg);

    ASSERT_EQ(run.log.size(), 50u);
    for (std::size_t k = 0; k < 50; ++k) {
        const double z = s.a * x + s.e;
        const double r = s.c * z + s.d - x;
        EXPECT_NEAR(run.log[k].total, r * r, 1e-12);
        // L = r^2: dL/dc = 2 r z, dL/dd = 2 r, dL/da = 2 r c x, dL/de = 2 r c.
        s = Scalar{s.a - lr * 2 * r * s.c * x, s.e - lr * 2 * r * s.c, s.c - lr * 2 * r * z, s.d - lr * 2 * r};
    }
    EXPECT_NEAR(run.encoder.parameters()[0][0], s.a, 1e-12);
    EXPECT_NEAR(run.encoder.parameters()[1][0], s.e, 1e-12);
    EXPECT_NEAR(run.decoder.parameters()[0][0], s.c, 1e-12);
    EXPECT_NEAR(run.decoder.parameters()[1][0], s.d, 1e-12);
}

TEST(Training, IdenticalSeedsGiveIdenticalRuns) {
    const ToyPair t = toy_pair(3);
    const Dataset data = toy_data(8, 4);
    for (TrainMode mode : {TrainMode::Invariant, TrainMode::Ordinary}) {
        const auto a = train_autoencoder(t.enc, t.dec, data, toy_config(mode, 30));
        const auto b = train_autoencoder(t.enc, t.dec, data, toy_config(mode, 30));
        EXPECT_EQ(a.log, b.log);
        EXPECT_EQ(a.encoder, b.encoder);
        EXPECT_EQ(a.decoder, b.decoder);
        EXPECT_EQ(a.state.rng_state, b.state.rng_state);
        TrainConfig other = toy_config(mode, 30);
        other.seed = 12;
        EXPECT_NE(train_autoencoder(t.enc, t.dec, data, other).log, a.log);
    }
}

TEST(Training, LogAndCheckpointCadence) {
    const ToyPair t = toy_pair(5);
    TrainConfig cfg = toy_config(TrainMode::Invariant, 10);
    cfg.log_every = 4;
    cfg.checkpoint_every = 3;
    std::vector<std::size_t> ckpt_steps;
    const auto run = train_autoencoder(t.enc, t.dec, toy_data(4, 6), cfg, std::nullopt,
                                       [&](const Model&, const Model&, const TrainState& s) {
                                           ckpt_steps.push_back(s.step);
                                       });
    std::vector<std::size_t> log_steps;
    for (const auto& row : run.log) {
        log_steps.push_back(row.step);
        EXPECT_NEAR(row.total, row.c_inv + row.c_res + cfg.weights.lambda_spa * row.c_spa, 1e-9 * row.total);
    }
    EXPECT_EQ(log_steps, (std::vector<std::size_t>{4, 8, 10}));
    EXPECT_EQ(ckpt_steps, (std::vector<std::size_t>{3, 6, 9, 10}));
}

TEST(Training, OrdinaryLogReportsReconstructionAsRes) {
    const ToyPair t = toy_pair(7);
    const auto run = train_autoencoder(t.enc, t.dec, toy_data(4, 8), toy_config(TrainMode::Ordinary, 3));
    for (const auto& row : run.log) {
        EXPECT_EQ(row.c_inv, 0.0);
        EXPECT_EQ(row.c_spa, 0.0);
        EXPECT_EQ(row.total, row.c_res);
    }
    const CsvTable table = loss_log_table(run.log);
    EXPECT_EQ(table.header, (std::vector<std::string>{"step", "c_inv", "c_res", "c_spa", "total"}));
    EXPECT_EQ(table.rows.size(), 3u);
}

TEST(Training, IdentityGridAugmentationMatchesPlainOrdinary) {
    const ToyPair t = toy_pair(9);
    const Dataset data = toy_data(6, 10);
    TrainConfig plain = toy_config(TrainMode::Ordinary, 25);
    plain.grid = TransformGrid::identity_only();
    plain.augment = false;
    TrainConfig aug = plain;
    aug.augment = true;
    const auto a = train_autoencoder(t.enc, t.dec, data, plain);
    const auto b = train_autoencoder(t.enc, t.dec, data, aug);
    EXPECT_EQ(a.log, b.log);
    EXPECT_EQ(a.encoder, b.encoder);
    EXPECT_EQ(a.decoder, b.decoder);
}

TEST(Training, AllZeroDatasetAugmentationIsInvisible) {
    const ToyPair t = toy_pair(11);
    const Dataset zeros(Tensor({5, 1, 6, 6}, 0.0));
    TrainConfig plain = toy_config(TrainMode::Ordinary, 25);
    plain.augment = false;
    TrainConfig aug = plain;
    aug.augment = true;
    aug.grid = desk_grid();
    const auto a = train_autoencoder(t.enc, t.dec, zeros, plain);
    const auto b = train_autoencoder(t.enc, t.dec, zeros, aug);
    EXPECT_EQ(a.log, b.log);
    EXPECT_EQ(a.encoder, b.encoder);
    EXPECT_NE(a.state.rng_state, b.state.rng_state);
}

TEST(Training, ResumeMatchesUninterruptedRun) {
    const ToyPair t = toy_pair(13);
    const Dataset data = toy_data(7, 14);
    for (TrainMode mode : {TrainMode::Invariant, TrainMode::Ordinary}) {
        const TrainConfig full = toy_config(mode, 20);
        const auto straight = train_autoencoder(t.enc, t.dec, data, full);

        TrainConfig first = full;
        first.total_updates = 8;
        const auto head = train_autoencoder(t.enc, t.dec, data, first);
        const auto tail = train_autoencoder(head.encoder, head.decoder, data, full, head.state);
        EXPECT_EQ(tail.encoder, straight.encoder);
        EXPECT_EQ(tail.decoder, straight.decoder);
        std::vector<LossLogRow> joined = head.log;
        joined.insert(joined.end(), tail.log.begin(), tail.log.end());
        EXPECT_EQ(joined, straight.log);
        EXPECT_EQ(tail.state.rng_state, straight.state.rng_state);
    }
}

TEST(Training, DivergenceAbortsWithComponent) {
    const ToyPair t = scalar_pair({2.0, 0.0, 2.0, 0.0});
    TrainConfig cfg;
    cfg.mode = TrainMode::Ordinary;
    cfg.augment = false;
    cfg.grid = TransformGrid::identity_only();
    cfg.learning_rate = 10.0;
    cfg.batch_size = 1;
    cfg.total_updates = 1000;
    const std::set<std::string> known{"encoder parameters", "decoder parameters", "encoder", "decoder",
                                      "c_ord", "c_inv", "c_res", "c_spa", "total", "encoder gradient",
                                      "decoder gradient"};
    try {
        train_autoencoder(t.enc, t.dec, Dataset(Tensor({1, 1, 1, 1}, 1.0)), cfg);
        FAIL() << "training should have diverged";
    } catch (const TrainingAborted& e) {
        EXPECT_GE(e.step(), 1u);
        EXPECT_LT(e.step(), 1000u);
        EXPECT_TRUE(known.count(e.component())) << e.component();
    }
}

TEST(Training, ConfigAndShapeErrors) {
    const ToyPair t = toy_pair(15);
    TrainConfig cfg = toy_config(TrainMode::Invariant, 5);
    cfg.learning_rate = 0.0;
    EXPECT_THROW(train_autoencoder(t.enc, t.dec, toy_data(3, 1), cfg), ConfigError);
    cfg = toy_config(TrainMode::Regressor, 5);
    EXPECT_THROW(train_autoencoder(t.enc, t.dec, toy_data(3, 1), cfg), ConfigError);
    cfg = toy_config(TrainMode::Invariant, 5);
    EXPECT_ANY_THROW(train_autoencoder(t.enc, t.dec, Dataset(Tensor({2, 1, 4, 4}, 0.0)), cfg));
}

TEST(Training, CoTrainedRegressorIsUpdated) {
    const ToyPair t = toy_pair(16);
    Rng rng(17);
    const Model reg(toy_regressor_spec(), rng);
    const auto run = train_autoencoder(t.enc, t.dec, toy_data(5, 18), toy_config(TrainMode::Invariant, 5),
                                       std::nullopt, {}, reg);
    ASSERT_TRUE(run.regressor.has_value());
    EXPECT_NE(*run.regressor, reg);
    // The autoencoder trajectory does not depend on the co-trained regressor.
    const auto alone = train_autoencoder(t.enc, t.dec, toy_data(5, 18), toy_config(TrainMode::Invariant, 5));
    EXPECT_EQ(alone.encoder, run.encoder);
}

TEST(TrainRegressor, IdentityAutoencoderTargetsAreZero) {
    const Model enc = linear_model({1, 6, 6}, identity_matrix(36), Tensor({36}, 0.0));
    const Model dec = linear_model({36}, identity_matrix(36), Tensor({36}, 0.0), {1, 6, 6});
    const Model reg = linear_model({1, 6, 6}, Tensor({2, 36}, 0.0), Tensor({2}, 0.0));
    TrainConfig cfg = toy_config(TrainMode::Regressor, 20);
    cfg.augment = false;
    const auto run = train_regressor(reg, enc, dec, toy_data(6, 19), cfg);
    for (const auto& row : run.log) {
        EXPECT_EQ(row.total, 0.0);
    }
    EXPECT_EQ(run.regressor, reg);
    EXPECT_EQ(run.holdout_mae, 0.0);
}

TEST(TrainRegressor, QuadraticObjectiveConverges) {
    // D(E(I)) = T_(2,0)(I), so the target for every image is (-2, 0).
    const Model enc = linear_model({1, 6, 6}, identity_matrix(36), Tensor({36}, 0.0));
    const Model dec = linear_model({36}, shift_matrix(6, 6, {2, 0}), Tensor({36}, 0.0), {1, 6, 6});
    const Model reg = linear_model({1, 6, 6}, Tensor({2, 36}, 0.0), Tensor({2}, 0.0));
    Tensor image({1, 1, 6, 6}, 0.0);
    image[2 * 6 + 2] = 1.0;
    image[3 * 6 + 3] = 0.5;
    const Dataset data(stack(std::vector<Tensor>{image.row(0), image.row(0)}));
    TrainConfig cfg;
    cfg.mode = TrainMode::Regressor;
    cfg.grid = TransformGrid::square(std::vector<int>{-2, 0, 2});
    cfg.augment = false;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 1;
    cfg.total_updates = 10000;
    cfg.holdout_fraction = 0.5;
    cfg.log_every = 0;
    const Model enc_before = enc;
    const Model dec_before = dec;
    const auto run = train_regressor(reg, enc, dec, data, cfg);
    const Tensor pred = run.regressor.predict(image);
    EXPECT_LT(std::abs(pred[0] + 2.0), 1e-3);
    EXPECT_LT(std::abs(pred[1]), 1e-3);
    EXPECT_LT(run.holdout_mae, 1e-3);
    EXPECT_EQ(enc, enc_before);
    EXPECT_EQ(dec, dec_before);
}

TEST(TrainRegressor, ResumeMatchesUninterruptedRun) {
    const ToyPair t = toy_pair(20);
    Rng rng(21);
    const Model reg(toy_regressor_spec(), rng);
    const Dataset data = toy_data(8, 22);
    const TrainConfig full = toy_config(TrainMode::Regressor, 15);
    const auto straight = train_regressor(reg, t.enc, t.dec, data, full);
    TrainConfig first = full;
    first.total_updates = 6;
    const auto head = train_regressor(reg, t.enc, t.dec, data, first);
    const auto tail = train_regressor(head.regressor, t.enc, t.dec, data, full, head.state);
    EXPECT_EQ(tail.regressor, straight.regressor);
    EXPECT_EQ(tail.holdout_mae, straight.holdout_mae);
    EXPECT_EQ(regressor_log_table(straight.log).header, (std::vector<std::string>{"step", "c_par"}));
}

TEST(GatherBatch, ShiftsSelectedItems) {
    const Dataset data = toy_data(3, 23);
    const std::vector<std::size_t> idx{2, 0};
    const std::vector<ShiftParam> shifts{{1, 0}, {0, 0}};
    const Tensor batch = gather_batch(data, idx, shifts);
    EXPECT_EQ(batch.row(0), apply_shift(data.item(2), {1, 0}));
    EXPECT_EQ(batch.row(1), data.item(0));
    EXPECT_EQ(gather_batch(data, idx).row(0), data.item(2));
}

TEST(Training, SyntheticLossDecreases) {
    const ExperimentConfig exp = desk_profile();
    Rng init(exp.seed);
    const Model enc(exp.encoder, init);
    const Model dec(exp.decoder, init);
    TrainConfig cfg = exp.training;
    cfg.weights = LossWeights{};
    cfg.total_updates = 2000;
    cfg.log_every = 1;
    const auto run = train_autoencoder(enc, dec, make_synthetic(exp, false), cfg);
    ASSERT_EQ(run.log.size(), 2000u);
    const auto window_mean = [&](std::size_t step) {
        const std::size_t first = step >= 200 ? step - 200 : 0;
        double sum = 0.0;
        for (std::size_t i = first; i < step; ++i) {
            sum += run.log[i].total;
        }
        return sum / static_cast<double>(step - first);
    };
    EXPECT_LT(window_mean(2000), window_mean(100));
}
