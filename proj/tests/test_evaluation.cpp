#include <algorithm>
#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "grad_check.hpp"
#include "tiae/errors.hpp"
#include "tiae/evaluation.hpp"
#include "toy_models.hpp"

using namespace tiae;
using namespace tiae::testing;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("tiae_test_eval_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Descriptors are the raw pixels.
Codec pixel_codec(Shape item_shape) {
    return Codec{[](const Tensor& x) { return x.reshaped({x.dim(0), x.numel() / x.dim(0)}); },
                 [item_shape](const Tensor& z) {
                     Shape s{z.dim(0)};
                     s.insert(s.end(), item_shape.begin(), item_shape.end());
                     return z.reshaped(s);
                 }};
}

// D(E(J)) = T_p(J) on any image.
Codec shifting_codec(Shape item_shape, ShiftParam p) {
    const Codec base = pixel_codec(item_shape);
    return Codec{base.encode, [base, p](const Tensor& z) { return apply_shift(base.decode(z), p); }};
}

Dataset random_items(std::size_t n, std::size_t side, std::uint64_t seed, int classes = 2) {
    Rng rng(seed);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
    }
    return Dataset(random_tensor({n, 1, side, side}, rng, 0.0, 1.0), labels);
}

Tensor blob_image(std::size_t side) {
    Tensor img({1, side, side}, 0.0);
    const std::size_t c = side / 2 - 1;
    img[c * side + c] = 1.0;
    img[c * side + c + 1] = 0.6;
    img[(c + 1) * side + c] = 0.3;
    return img;
}

} // namespace

TEST(InvarianceReport, ConstantEncoderHasZeroWithinVariance) {
    Tensor imgs({4, 1, 10, 10}, 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
        const Tensor b = blob_image(10);
        for (std::size_t k = 0; k < 100; ++k) {
            imgs[i * 100 + k] = b[k] * (i % 2 == 0 ? 0.4 : 0.9);
        }
    }
    const Dataset items(imgs, std::vector<int>{0, 1, 0, 1});
    Codec codec{[](const Tensor& x) { return Tensor({x.dim(0), 3}, 0.25); },
                [](const Tensor& z) { return Tensor({z.dim(0), 1, 10, 10}, 0.5); }};
    // Every class centroid coincides, so the ratio is undefined.
    EXPECT_THROW(invariance_report(codec, items, toy_grid()), DegenerateError);

    // Constant coordinates plus the peak value, which small shifts preserve.
    codec.encode = [](const Tensor& x) {
        Tensor z({x.dim(0), 3}, 0.25);
        const std::size_t n = x.numel() / x.dim(0);
        for (std::size_t i = 0; i < x.dim(0); ++i) {
            double peak = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                peak = std::max(peak, x[i * n + k]);
            }
            z[i * 3 + 2] = peak;
        }
        return z;
    };
    const InvarianceReport r = invariance_report(codec, items, toy_grid());
    EXPECT_EQ(r.mean_within_shift_variance, 0.0);
    EXPECT_EQ(r.max_restored_pairwise_l2, 0.0);
    EXPECT_EQ(r.ratio, 0.0);
    EXPECT_NEAR(r.between_class_variance, 0.25, 1e-15);
}

TEST(InvarianceReport, IdentityGridHasZeroWithinVariance) {
    const Dataset items = random_items(5, 6, 2, 3);
    const InvarianceReport r = invariance_report(pixel_codec({1, 6, 6}), items, TransformGrid::identity_only());
    for (double v : r.within_shift_variance) {
        EXPECT_EQ(v, 0.0);
    }
    EXPECT_EQ(r.ratio, 0.0);
    EXPECT_EQ(r.classes, 3u);
    EXPECT_GT(r.between_class_variance, 0.0);
}

TEST(InvarianceReport, TwoItemsTwoShiftsMatchDirectFormula) {
    const Tensor images({2, 1, 2, 2}, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.0, 0.0, 0.9});
    const Dataset items(images, std::vector<int>{0, 1});
    const TransformGrid grid({{0, 0}, {1, 0}});
    const InvarianceReport r = invariance_report(pixel_codec({1, 2, 2}), items, grid);
    // Item 0 shifted by (1, 0) is {0.2, 0, 0.4, 0}; item 1 becomes {0, 0, 0.9, 0}.
    const double within0 = (0.05 * 0.05 + 0.1 * 0.1 + 0.05 * 0.05 + 0.2 * 0.2);
    const double within1 = (0.25 * 0.25 + 0.0 + 0.45 * 0.45 + 0.45 * 0.45);
    ASSERT_EQ(r.within_shift_variance.size(), 2u);
    EXPECT_NEAR(r.within_shift_variance[0], within0, 1e-15);
    EXPECT_NEAR(r.within_shift_variance[1], within1, 1e-15);
    EXPECT_NEAR(r.mean_within_shift_variance, (within0 + within1) / 2, 1e-15);
    const double between = 0.4 * 0.4 + 0.2 * 0.2 + 0.3 * 0.3 + 0.5 * 0.5;
    EXPECT_NEAR(r.between_class_variance, between, 1e-15);
    EXPECT_NEAR(r.ratio, (within0 + within1) / 2 / between, 1e-14);
    // The two restorations sit at twice the centroid distance from each other.
    EXPECT_NEAR(r.restored_pairwise_l2[0], std::sqrt(4 * within0), 1e-15);
    EXPECT_NEAR(r.restored_pairwise_l2[1], std::sqrt(4 * within1), 1e-15);
    EXPECT_NEAR(r.max_restored_pairwise_l2, std::sqrt(4 * within1), 1e-15);
}

TEST(InvarianceReport, RequiresLabelsAndTwoClasses) {
    Rng rng(3);
    const Tensor images = random_tensor({4, 1, 6, 6}, rng, 0.0, 1.0);
    EXPECT_THROW(invariance_report(pixel_codec({1, 6, 6}), Dataset(images), desk_grid()), std::invalid_argument);
    EXPECT_THROW(invariance_report(pixel_codec({1, 6, 6}), Dataset(images, std::vector<int>(4, 1)), desk_grid()),
                 std::invalid_argument);
}

TEST(InvarianceReport, Deterministic) {
    Rng rng(4);
    const Model enc(toy_encoder_spec(), rng);
    const Model dec(toy_decoder_spec(), rng);
    const Dataset items = random_items(6, 6, 5);
    const auto a = invariance_report(model_codec(enc, dec), items, toy_grid());
    const auto b = invariance_report(model_codec(enc, dec), items, toy_grid());
    EXPECT_EQ(a.within_shift_variance, b.within_shift_variance);
    EXPECT_EQ(a.ratio, b.ratio);
    for (double v : a.within_shift_variance) {
        EXPECT_GE(v, 0.0);
    }
}

TEST(Projection, PlaneThroughThreeMeans) {
    Rng rng(6);
    const Tensor m1 = random_tensor({5}, rng);
    const Tensor m2 = random_tensor({5}, rng);
    const Tensor m3 = random_tensor({5}, rng);
    const ProjectionPlane plane = projection_plane(m1, m2, m3);
    for (std::size_t a = 0; a < 2; ++a) {
        for (std::size_t b = 0; b < 2; ++b) {
            double dot = 0.0;
            for (std::size_t i = 0; i < 5; ++i) {
                dot += plane.basis[a][i] * plane.basis[b][i];
            }
            EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-12);
        }
    }
    const std::array<Tensor, 3> means{m1, m2, m3};
    std::array<std::array<double, 2>, 3> p;
    for (std::size_t i = 0; i < 3; ++i) {
        p[i] = plane.project(means[i]);
        // The mean is reproduced by its plane coordinates.
        for (std::size_t c = 0; c < 5; ++c) {
            const double back = plane.origin[c] + p[i][0] * plane.basis[0][c] + p[i][1] * plane.basis[1][c];
            EXPECT_NEAR(back, means[i][c], 1e-8);
        }
    }
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = i + 1; j < 3; ++j) {
            const double projected = std::hypot(p[i][0] - p[j][0], p[i][1] - p[j][1]);
            EXPECT_GT(projected, 0.0);
            EXPECT_NEAR(projected, std::sqrt(squared_distance(means[i].data(), means[j].data())), 1e-12);
        }
    }
    Tensor centroid({5});
    for (std::size_t c = 0; c < 5; ++c) {
        centroid[c] = (m1[c] + m2[c] + m3[c]) / 3.0;
    }
    const auto origin = plane.project(centroid);
    EXPECT_NEAR(origin[0], 0.0, 1e-12);
    EXPECT_NEAR(origin[1], 0.0, 1e-12);
}

TEST(Projection, CollinearMeansRejected) {
    const Tensor m1 = Tensor::vector({0, 0, 0});
    const Tensor m2 = Tensor::vector({1, 2, 3});
    const Tensor m3 = Tensor::vector({2, 4, 6});
    EXPECT_THROW(projection_plane(m1, m2, m3), DegenerateError);
    EXPECT_THROW(projection_plane(m1, m1, m2), DegenerateError);
}

TEST(Gallery, NineShiftsGiveTwentySevenImages) {
    const fs::path dir = temp_dir("gallery");
    const TransformGrid grid = TransformGrid::square(std::vector<int>{-1, 0, 1});
    const Tensor item = blob_image(8);
    const auto entries = restoration_gallery(pixel_codec({1, 8, 8}), item, grid, dir);
    ASSERT_EQ(entries.size(), 9u);
    std::size_t pgm = 0;
    for (const auto& f : fs::directory_iterator(dir)) {
        pgm += f.path().extension() == ".pgm";
    }
    EXPECT_EQ(pgm, 27u);
    EXPECT_TRUE(fs::exists(dir / "shift_000_input.pgm"));
    EXPECT_TRUE(fs::exists(dir / "shift_008_reshifted.pgm"));
    EXPECT_TRUE(fs::exists(dir / "gallery.csv"));
    const CsvTable csv = read_csv(dir / "gallery.csv");
    EXPECT_EQ(csv.rows.size(), 9u);

    // The pixel codec restores the input exactly, so the inferred shift is identity.
    for (const auto& e : entries) {
        EXPECT_EQ(e.inferred, (ShiftParam{0, 0}));
        EXPECT_EQ(read_pgm(e.input), read_pgm(e.restored));
    }
}

TEST(Gallery, ContactSheetReparsesFiles) {
    const fs::path dir = temp_dir("sheet");
    const TransformGrid grid({{0, 0}, {2, 0}, {0, 2}});
    const Tensor item = blob_image(8);
    const auto entries =
        restoration_gallery(shifting_codec({1, 8, 8}, {1, 0}), item, grid, dir,
                            [](const Tensor& x) { return Tensor({x.dim(0), 2}, std::vector<double>(2 * x.dim(0), 0.0)); });
    const Tensor sheet = contact_sheet(dir);
    ASSERT_EQ(sheet.shape(), (Shape{3 * 8, 3 * 8}));
    for (std::size_t g = 0; g < 3; ++g) {
        const std::array<Tensor, 3> parts{read_pgm(entries[g].input), read_pgm(entries[g].restored),
                                          read_pgm(entries[g].reshifted)};
        for (std::size_t p = 0; p < 3; ++p) {
            for (std::size_t y = 0; y < 8; ++y) {
                for (std::size_t x = 0; x < 8; ++x) {
                    ASSERT_EQ(sheet[(g * 8 + y) * 24 + p * 8 + x], parts[p][y * 8 + x]);
                }
            }
        }
        // Predictor output (0, 0) snaps to the identity, so reshifted equals restored.
        EXPECT_EQ(parts[1], parts[2]);
    }
}

TEST(Gallery, BestShiftUndoesKnownRestorationOffset) {
    const fs::path dir = temp_dir("undo");
    const TransformGrid grid = TransformGrid::square(std::vector<int>{-2, 0, 2});
    const auto entries = restoration_gallery(shifting_codec({1, 10, 10}, {2, 0}), blob_image(10), grid, dir);
    for (const auto& e : entries) {
        EXPECT_EQ(e.inferred, (ShiftParam{-2, 0}));
        EXPECT_EQ(read_pgm(e.reshifted), read_pgm(e.input));
    }
}

TEST(ShiftAccuracy, PerfectPredictor) {
    const TransformGrid grid = TransformGrid::square(std::vector<int>{-2, 0, 2});
    Tensor imgs({3, 1, 10, 10}, 0.0);
    for (std::size_t i = 0; i < 3; ++i) {
        const Tensor b = blob_image(10);
        for (std::size_t k = 0; k < 100; ++k) {
            imgs[i * 100 + k] = b[k] * (1.0 - 0.2 * static_cast<double>(i));
        }
    }
    const Dataset items(imgs);
    const ShiftPredictor near_target = [](const Tensor& x) {
        Tensor out({x.dim(0), 2});
        for (std::size_t i = 0; i < x.dim(0); ++i) {
            out[2 * i] = -2.0 + 0.3;
            out[2 * i + 1] = -0.2;
        }
        return out;
    };
    const ShiftAccuracy acc = shift_inference_accuracy(near_target, shifting_codec({1, 10, 10}, {2, 0}), items, grid);
    EXPECT_EQ(acc.records.size(), 27u);
    EXPECT_EQ(acc.mae, 0.0);
    EXPECT_NEAR(acc.raw_mae, 0.25, 1e-12);
    EXPECT_EQ(acc.fraction_within_2px, 1.0);

    const ShiftPredictor zero = [](const Tensor& x) { return Tensor({x.dim(0), 2}, 0.0); };
    const ShiftAccuracy id = shift_inference_accuracy(zero, pixel_codec({1, 10, 10}), items, grid);
    EXPECT_EQ(id.mae, 0.0);
    EXPECT_EQ(id.fraction_within_2px, 1.0);
}

TEST(ShiftAccuracy, MatchesIndependentRecomputation) {
    Rng rng(7);
    const Model enc(toy_encoder_spec(), rng);
    const Model dec(toy_decoder_spec(), rng);
    Model reg(toy_regressor_spec(), rng);
    for (Tensor& p : reg.parameters()) {
        for (double& v : p.data()) {
            v *= 8.0;
        }
    }
    const Dataset items = random_items(4, 6, 8);
    const TransformGrid grid = toy_grid();
    const Codec codec = model_codec(enc, dec);
    const ShiftAccuracy acc = shift_inference_accuracy(model_predictor(reg), codec, items, grid);

    double abs_snapped = 0.0;
    double abs_raw = 0.0;
    std::size_t within = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const Tensor shifted = apply_shift(items.item(i), grid[g]);
            const Tensor batch = shifted.reshaped({1, 1, 6, 6});
            const Tensor restored = dec.predict(enc.predict(batch));
            const ShiftParam target = best_shift(batch.row(0), restored.row(0), grid).param;
            const Tensor raw = reg.predict(batch);
            const ShiftParam snapped = grid[grid.nearest_index(raw[0], raw[1])];
            const ShiftRecord& rec = acc.records[n];
            EXPECT_EQ(rec.item, i);
            EXPECT_EQ(rec.grid_index, g);
            EXPECT_EQ(rec.target, target);
            EXPECT_EQ(rec.snapped, snapped);
            EXPECT_NEAR(rec.raw_dx, raw[0], 1e-12);
            EXPECT_NEAR(rec.raw_dy, raw[1], 1e-12);
            const int ex = std::abs(snapped.dx - target.dx);
            const int ey = std::abs(snapped.dy - target.dy);
            abs_snapped += (ex + ey) / 2.0;
            abs_raw += (std::abs(raw[0] - target.dx) + std::abs(raw[1] - target.dy)) / 2.0;
            within += ex <= 2 && ey <= 2;
            ++n;
        }
    }
    ASSERT_EQ(acc.records.size(), n);
    EXPECT_NEAR(acc.mae, abs_snapped / static_cast<double>(n), 1e-12);
    EXPECT_NEAR(acc.raw_mae, abs_raw / static_cast<double>(n), 1e-12);
    EXPECT_NEAR(acc.fraction_within_2px, static_cast<double>(within) / static_cast<double>(n), 1e-12);
}

TEST(ShiftedCopies, ItemMajorOrder) {
    const Dataset items = random_items(2, 6, 9);
    const Tensor copies = shifted_copies(items, toy_grid());
    ASSERT_EQ(copies.dim(0), 8u);
    EXPECT_EQ(copies.row(1 * 4 + 2), apply_shift(items.item(1), toy_grid()[2]));
}

TEST(PcaCodec, ReconstructsTrainingSpan) {
    const Dataset items = random_items(6, 4, 10);
    const PcaModel pca = pca_fit(items.images(), 5);
    const Codec codec = pca_codec(pca, {1, 4, 4});
    const Tensor back = codec.decode(codec.encode(items.images()));
    EXPECT_EQ(back.shape(), items.images().shape());
    EXPECT_LT(std::sqrt(squared_distance(back.data(), items.images().data())), 1e-10);
}
