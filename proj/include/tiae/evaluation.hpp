#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <vector>

#include "tiae/data_io.hpp"
#include "tiae/model.hpp"
#include "tiae/pca.hpp"
#include "tiae/tensor.hpp"
#include "tiae/transforms.hpp"

namespace tiae {

/// Batch encoder and decoder as plain functions, so trained networks and the
/// PCA baseline are evaluated by the same code.
struct Codec {
    /// [n x item...] -> [n x d]
    std::function<Tensor(const Tensor&)> encode;
    /// [n x d] -> [n x item...]
    std::function<Tensor(const Tensor&)> decode;
};

Codec model_codec(const Model& enc, const Model& dec);
/// Decoded rows are reshaped to `item_shape`.
Codec pca_codec(const PcaModel& pca, Shape item_shape);

struct InvarianceReport {
    /// Per item: mean squared distance of its shifted-input descriptors to their centroid.
    std::vector<double> within_shift_variance;
    double mean_within_shift_variance = 0.0;
    /// Mean squared distance between pairs of class centroids of unshifted descriptors.
    double between_class_variance = 0.0;
    double ratio = 0.0;
    /// Per item: mean L2 distance over pairs of restorations of shifted inputs.
    std::vector<double> restored_pairwise_l2;
    double mean_restored_pairwise_l2 = 0.0;
    double max_restored_pairwise_l2 = 0.0;
    std::size_t classes = 0;
};

/// Throws std::invalid_argument when labels are missing or fewer than two
/// classes are present.
InvarianceReport invariance_report(const Codec& codec, const Dataset& items,
                                   const TransformGrid& grid);

/// Affine plane through three points, origin at their centroid.
struct ProjectionPlane {
    Tensor origin;
    std::array<Tensor, 2> basis;

    std::array<double, 2> project(const Tensor& descriptor) const;
};

/// Throws DegenerateError when the means are (numerically) collinear.
ProjectionPlane projection_plane(const Tensor& m1, const Tensor& m2, const Tensor& m3);

/// Shift-parameter predictor: [n x item...] -> [n x 2] continuous (dx, dy).
using ShiftPredictor = std::function<Tensor(const Tensor&)>;
ShiftPredictor model_predictor(const Model& regressor);

struct GalleryEntry {
    std::size_t index = 0;
    ShiftParam shift;
    ShiftParam inferred;
    std::filesystem::path input;
    std::filesystem::path restored;
    std::filesystem::path reshifted;
};

/// For every grid element g writes shift_NNN_input.pgm (the item shifted by g),
/// shift_NNN_restored.pgm (its restoration) and shift_NNN_reshifted.pgm (the
/// restoration shifted by the inferred parameter), NNN = g zero-padded to 3
/// digits, plus gallery.csv indexing them. The inferred parameter is the
/// predictor output snapped to the grid, or best_shift against the input when
/// no predictor is given. `item` is [1 x h x w].
std::vector<GalleryEntry> restoration_gallery(const Codec& codec, const Tensor& item,
                                              const TransformGrid& grid,
                                              const std::filesystem::path& out_dir,
                                              const ShiftPredictor& predictor = {});

/// Re-reads a gallery directory into one image: row g holds input, restored
/// and reshifted side by side, [grid * h x 3 * w] quantized values.
Tensor contact_sheet(const std::filesystem::path& gallery_dir);

struct ShiftRecord {
    std::size_t item = 0;
    std::size_t grid_index = 0;
    ShiftParam target;
    double raw_dx = 0.0;
    double raw_dy = 0.0;
    ShiftParam snapped;
};

struct ShiftAccuracy {
    std::vector<ShiftRecord> records;
    /// Mean over records of (|dx error| + |dy error|) / 2, snapped predictions.
    double mae = 0.0;
    /// Same with the raw continuous predictions.
    double raw_mae = 0.0;
    /// Fraction of records whose snapped prediction is within 2 px of the target on both axes.
    double fraction_within_2px = 0.0;
};

/// For each item and grid shift theta compares the predictor on T_theta(I),
/// snapped to the grid, with best_shift(T_theta(I), D(E(T_theta(I)))).
ShiftAccuracy shift_inference_accuracy(const ShiftPredictor& predictor, const Codec& codec,
                                       const Dataset& items, const TransformGrid& grid);

/// All grid shifts of every item, item-major: row i * G + g is item i shifted by grid[g].
Tensor shifted_copies(const Dataset& items, const TransformGrid& grid);

} // namespace tiae
