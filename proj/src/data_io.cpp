#include "tiae/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tiae/errors.hpp"
#include "tiae/rng.hpp"

namespace tiae {

namespace fs = std::filesystem;

Dataset::Dataset(Tensor images, std::optional<std::vector<int>> labels)
    : item_shape_(images.shape().begin() + 1, images.shape().end()),
      size_(images.dim(0)),
      images_(std::move(images)),
      labels_(std::move(labels)) {
    if (item_shape_.empty()) {
        throw std::invalid_argument("dataset images must be [n x ...]");
    }
    for (double v : images_.data()) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument("dataset values must lie in [0, 1]");
        }
    }
    if (labels_ && labels_->size() != size_) {
        throw std::invalid_argument("dataset has " + std::to_string(labels_->size()) +
                                    " labels for " + std::to_string(size_) + " images");
    }
}

Dataset Dataset::empty(Shape item_shape, bool with_labels) {
    Dataset d;
    d.item_shape_ = std::move(item_shape);
    if (with_labels) {
        d.labels_ = std::vector<int>{};
    }
    return d;
}

const Tensor& Dataset::images() const {
    if (size_ == 0) {
        throw ShapeError("dataset is empty");
    }
    return images_;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    if (indices.empty()) {
        return empty(item_shape_, labels_.has_value());
    }
    std::vector<Tensor> items;
    items.reserve(indices.size());
    std::vector<int> picked;
    for (std::size_t i : indices) {
        if (i >= size_) {
            throw ShapeError("subset: index out of range");
        }
        items.push_back(item(i));
        if (labels_) {
            picked.push_back(labels_->at(i));
        }
    }
    std::optional<std::vector<int>> labels;
    if (labels_) {
        labels = std::move(picked);
    }
    return Dataset(stack(items), std::move(labels));
}

std::pair<Dataset, Dataset> Dataset::split_tail(double fraction) const {
    const std::size_t n = size();
    if (n < 2) {
        throw ShapeError("split_tail: need at least 2 items");
    }
    auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    held = std::clamp<std::size_t>(held, 1, n - 1);
    std::vector<std::size_t> head(n - held);
    std::vector<std::size_t> tail(held);
    for (std::size_t i = 0; i < n; ++i) {
        (i < n - held ? head[i] : tail[i - (n - held)]) = i;
    }
    return {subset(head), subset(tail)};
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const fs::path& path) {
    if (offset + 4 > bytes.size()) {
        throw FormatError(path.string() + ": truncated header");
    }
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw FormatError("write failed: " + path.string());
    }
}

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

} // namespace

Dataset load_idx(const fs::path& images_path, const std::optional<fs::path>& labels_path,
                 std::optional<std::size_t> pad_to) {
    const auto bytes = read_file_bytes(images_path);
    const std::uint32_t magic = read_be32(bytes, 0, images_path);
    if (magic != kIdxImages) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "0x%08X", magic);
        throw FormatError(images_path.string() + ": bad magic " + buf + ", expected 0x00000803");
    }
    const std::size_t n = read_be32(bytes, 4, images_path);
    const std::size_t rows = read_be32(bytes, 8, images_path);
    const std::size_t cols = read_be32(bytes, 12, images_path);
    constexpr std::size_t header = 16;
    if (rows == 0 || cols == 0) {
        throw FormatError(images_path.string() + ": zero image extent");
    }
    if (bytes.size() < header + n * rows * cols) {
        throw FormatError(images_path.string() + ": truncated, expected " +
                          std::to_string(n * rows * cols) + " pixel bytes, found " +
                          std::to_string(bytes.size() - header));
    }
    std::size_t out_h = rows;
    std::size_t out_w = cols;
    if (pad_to && *pad_to > rows) {
        out_h = *pad_to;
    }
    if (pad_to && *pad_to > cols) {
        out_w = *pad_to;
    }
    const std::size_t top = (out_h - rows) / 2;
    const std::size_t left = (out_w - cols) / 2;

    std::optional<std::vector<int>> labels;
    if (labels_path) {
        const auto lbytes = read_file_bytes(*labels_path);
        const std::uint32_t lmagic = read_be32(lbytes, 0, *labels_path);
        if (lmagic != kIdxLabels) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "0x%08X", lmagic);
            throw FormatError(labels_path->string() + ": bad magic " + buf +
                              ", expected 0x00000801");
        }
        const std::size_t ln = read_be32(lbytes, 4, *labels_path);
        if (ln != n) {
            throw FormatError("label count " + std::to_string(ln) + " does not match image count " +
                              std::to_string(n));
        }
        if (lbytes.size() < 8 + ln) {
            throw FormatError(labels_path->string() + ": truncated label payload");
        }
        labels.emplace(ln);
        for (std::size_t i = 0; i < ln; ++i) {
            (*labels)[i] = lbytes[8 + i];
        }
    }
    if (n == 0) {
        return Dataset::empty({1, out_h, out_w}, labels.has_value());
    }

    Tensor images({n, 1, out_h, out_w}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t y = 0; y < rows; ++y) {
            for (std::size_t x = 0; x < cols; ++x) {
                const std::uint8_t b = bytes[header + (i * rows + y) * cols + x];
                images[(i * out_h + y + top) * out_w + x + left] = static_cast<double>(b) / 255.0;
            }
        }
    }

    return Dataset(std::move(images), std::move(labels));
}

namespace {

std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

} // namespace

void write_idx(const Dataset& data, const fs::path& images_path,
               const std::optional<fs::path>& labels_path) {
    const Shape& item = data.item_shape();
    if (item.size() != 3 || item[0] != 1) {
        throw ShapeError("write_idx: expects single-channel [n x 1 x h x w] images");
    }
    std::vector<std::uint8_t> out;
    out.reserve(16 + data.size() * shape_numel(item));
    put_be32(out, kIdxImages);
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    put_be32(out, static_cast<std::uint32_t>(item[1]));
    put_be32(out, static_cast<std::uint32_t>(item[2]));
    if (!data.is_empty()) {
        for (double v : data.images().data()) {
            out.push_back(quantize(v));
        }
    }
    write_bytes(images_path, out);

    if (labels_path) {
        if (!data.labels()) {
            throw FormatError("write_idx: dataset has no labels to write");
        }
        std::vector<std::uint8_t> lout;
        put_be32(lout, kIdxLabels);
        put_be32(lout, static_cast<std::uint32_t>(data.labels()->size()));
        for (int l : *data.labels()) {
            lout.push_back(static_cast<std::uint8_t>(l));
        }
        write_bytes(*labels_path, lout);
    }
}

std::vector<Tensor> default_motifs(std::size_t size) {
    if (size < 3) {
        throw std::invalid_argument("default_motifs: size must be at least 3");
    }
    Tensor cross({size, size}, 0.0);
    Tensor ring({size, size}, 0.0);
    Tensor diag({size, size}, 0.0);
    const std::size_t band = std::max<std::size_t>(1, size / 4);
    const std::size_t lo = (size - band) / 2;
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const std::size_t i = y * size + x;
            if ((y >= lo && y < lo + band) || (x >= lo && x < lo + band)) {
                cross[i] = 1.0;
            }
            if (y == 0 || x == 0 || y == size - 1 || x == size - 1) {
                ring[i] = 1.0;
            }
            if (x == y || x + y == size - 1) {
                diag[i] = 1.0;
            }
        }
    }
    return {cross, ring, diag};
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
    if (spec.motifs.empty()) {
        throw std::invalid_argument("gen_synthetic: motif bank is empty");
    }
    if (spec.placement_stride == 0 || spec.count_per_motif == 0) {
        throw std::invalid_argument("gen_synthetic: stride and count must be positive");
    }
    for (const Tensor& m : spec.motifs) {
        if (m.rank() != 2) {
            throw std::invalid_argument("gen_synthetic: motifs must be [h x w]");
        }
        if (m.dim(0) > spec.canvas_h || m.dim(1) > spec.canvas_w) {
            throw std::invalid_argument("gen_synthetic: motif " + shape_to_string(m.shape()) +
                                        " larger than canvas " + std::to_string(spec.canvas_h) +
                                        "x" + std::to_string(spec.canvas_w));
        }
    }

    Rng rng(spec.seed);
    const std::size_t h = spec.canvas_h;
    const std::size_t w = spec.canvas_w;
    std::vector<std::pair<std::size_t, Tensor>> items;
    for (std::size_t m = 0; m < spec.motifs.size(); ++m) {
        const Tensor& motif = spec.motifs[m];
        const std::size_t mh = motif.dim(0);
        const std::size_t mw = motif.dim(1);
        const std::size_t ny = (h - mh) / spec.placement_stride + 1;
        const std::size_t nx = (w - mw) / spec.placement_stride + 1;
        for (std::size_t c = 0; c < spec.count_per_motif; ++c) {
            const std::size_t oy = static_cast<std::size_t>(rng.uniform_index(ny)) * spec.placement_stride;
            const std::size_t ox = static_cast<std::size_t>(rng.uniform_index(nx)) * spec.placement_stride;
            Tensor canvas({1, h, w}, 0.0);
            for (std::size_t y = 0; y < mh; ++y) {
                for (std::size_t x = 0; x < mw; ++x) {
                    canvas[(oy + y) * w + ox + x] = motif[y * mw + x];
                }
            }
            items.emplace_back(m, std::move(canvas));
        }
    }
    shuffle(items, rng);

    std::vector<Tensor> images;
    std::vector<int> labels;
    images.reserve(items.size());
    for (auto& [label, image] : items) {
        labels.push_back(static_cast<int>(label));
        images.push_back(std::move(image));
    }
    return Dataset(stack(images), std::move(labels));
}

void export_pgm(const Tensor& image, const fs::path& path) {
    if (!(image.rank() == 2 || (image.rank() == 3 && image.dim(0) == 1))) {
        throw ShapeError("export_pgm: expects [h x w] or [1 x h x w], got " +
                         shape_to_string(image.shape()));
    }
    const std::size_t h = image.dim(image.rank() - 2);
    const std::size_t w = image.dim(image.rank() - 1);
    const std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    for (double v : image.data()) {
        bytes.push_back(quantize(v));
    }
    write_bytes(path, bytes);
}

Tensor read_pgm(const fs::path& path) {
    const auto bytes = read_file_bytes(path);
    std::size_t pos = 0;
    auto next_token = [&]() {
        for (;;) {
            while (pos < bytes.size() && std::isspace(bytes[pos])) {
                ++pos;
            }
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') {
                    ++pos;
                }
                continue;
            }
            break;
        }
        std::string token;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) {
            token.push_back(static_cast<char>(bytes[pos++]));
        }
        if (token.empty()) {
            throw FormatError(path.string() + ": truncated PGM header");
        }
        return token;
    };
    if (next_token() != "P5") {
        throw FormatError(path.string() + ": not a binary PGM (P5)");
    }
    std::size_t w = 0;
    std::size_t h = 0;
    std::size_t maxval = 0;
    try {
        w = std::stoul(next_token());
        h = std::stoul(next_token());
        maxval = std::stoul(next_token());
    } catch (const std::logic_error&) {
        throw FormatError(path.string() + ": malformed PGM header");
    }
    if (w == 0 || h == 0 || maxval == 0 || maxval > 255) {
        throw FormatError(path.string() + ": unsupported PGM dimensions or maxval");
    }
    ++pos; // single whitespace after maxval
    if (bytes.size() < pos + w * h) {
        throw FormatError(path.string() + ": truncated PGM payload");
    }
    Tensor image({h, w});
    for (std::size_t i = 0; i < w * h; ++i) {
        image[i] = static_cast<double>(bytes[pos + i]) / static_cast<double>(maxval);
    }
    return image;
}

std::string format_double(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

void export_csv(const CsvTable& table, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
    auto write_row = [&out](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i != 0) {
                out << ',';
            }
            out << row[i];
        }
        out << '\n';
    };
    write_row(table.header);
    for (const auto& row : table.rows) {
        write_row(row);
    }
    if (!out) {
        throw FormatError("write failed: " + path.string());
    }
}

CsvTable read_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    auto split = [](const std::string& line) {
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ss(line);
        while (std::getline(ss, field, ',')) {
            fields.push_back(field);
        }
        if (!line.empty() && line.back() == ',') {
            fields.emplace_back();
        }
        return fields;
    };
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError(path.string() + ": missing header row");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    table.header = split(line);
    std::size_t row_number = 1;
    while (std::getline(in, line)) {
        ++row_number;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        auto fields = split(line);
        if (fields.size() != table.header.size()) {
            throw FormatError(path.string() + ": row " + std::to_string(row_number) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(table.header.size()));
        }
        table.rows.push_back(std::move(fields));
    }
    return table;
}

std::string fnv1a64_hex(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_digest(const fs::path& path) { return fnv1a64_hex(read_file_bytes(path)); }

std::string tensor_digest(const Tensor& tensor) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(tensor.numel() * 8);
    for (double v : tensor.data()) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
        }
    }
    return fnv1a64_hex(bytes);
}

} // namespace tiae
