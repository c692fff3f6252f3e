#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tiae/tensor.hpp"

namespace tiae {

/// Images [n x ch x h x w] with values in [0, 1]. Labels are only consumed by
/// evaluation; training never reads them. A dataset may be empty, in which
/// case only its per-item shape is known.
class Dataset {
public:
    /// Throws std::invalid_argument when a value lies outside [0, 1] or the
    /// label count differs from the image count.
    explicit Dataset(Tensor images, std::optional<std::vector<int>> labels = std::nullopt);
    static Dataset empty(Shape item_shape, bool with_labels = false);

    std::size_t size() const noexcept { return size_; }
    bool is_empty() const noexcept { return size_ == 0; }
    const Shape& item_shape() const noexcept { return item_shape_; }
    /// All images as one tensor. Throws ShapeError on an empty dataset.
    const Tensor& images() const;
    const std::optional<std::vector<int>>& labels() const noexcept { return labels_; }

    Tensor item(std::size_t i) const { return images().row(i); }
    /// Items at `indices`, in that order, labels included.
    Dataset subset(std::span<const std::size_t> indices) const;
    /// Splits off the trailing `fraction` of items (at least one) as a held-out set.
    std::pair<Dataset, Dataset> split_tail(double fraction) const;

private:
    Dataset() = default;

    Shape item_shape_;
    std::size_t size_ = 0;
    Tensor images_;
    std::optional<std::vector<int>> labels_;
};

/// Parses an IDX image file (magic 0x00000803) and, optionally, its label
/// file (0x00000801). Pixel byte b becomes b / 255. When `pad_to` is set and
/// larger than the stored rows/cols, images are zero-padded symmetrically to
/// pad_to x pad_to (28x28 MNIST digits become 32x32).
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::optional<std::filesystem::path>& labels_path = std::nullopt,
                 std::optional<std::size_t> pad_to = 32);

/// Writes single-channel images as IDX (values quantized to round(255 v)) and
/// labels when present.
void write_idx(const Dataset& data, const std::filesystem::path& images_path,
               const std::optional<std::filesystem::path>& labels_path = std::nullopt);

struct SyntheticSpec {
    std::size_t canvas_h = 16;
    std::size_t canvas_w = 16;
    /// Binary [h x w] patterns; label = index into this list.
    std::vector<Tensor> motifs;
    std::size_t count_per_motif = 100;
    /// Placements are drawn uniformly from the in-bounds offsets that are
    /// multiples of this stride.
    std::size_t placement_stride = 1;
    std::uint64_t seed = 0;
};

/// Cross, ring and diagonal-X patterns of the given size.
std::vector<Tensor> default_motifs(std::size_t size);

/// One motif per image at a seeded uniform in-bounds position on a zero
/// canvas, shuffled. Throws std::invalid_argument when a motif exceeds the canvas.
Dataset gen_synthetic(const SyntheticSpec& spec);

/// Binary PGM (P5, maxval 255). `image` is [h x w] or [1 x h x w]; values are
/// clamped to [0, 1] and quantized as round(255 v).
void export_pgm(const Tensor& image, const std::filesystem::path& path);
/// Reads a P5 file back as [h x w] values b / maxval.
Tensor read_pgm(const std::filesystem::path& path);

/// Formats with 17 significant digits, enough to round-trip a double.
std::string format_double(double value);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// Header row then one line per row, comma separated, '\n' terminated.
void export_csv(const CsvTable& table, const std::filesystem::path& path);
/// Throws FormatError naming the first row whose field count differs from the header.
CsvTable read_csv(const std::filesystem::path& path);

/// FNV-1a 64-bit digest, rendered as 16 lowercase hex digits.
std::string fnv1a64_hex(std::span<const std::uint8_t> bytes);
std::string file_digest(const std::filesystem::path& path);
std::string tensor_digest(const Tensor& tensor);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

} // namespace tiae
