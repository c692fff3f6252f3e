#include "tiae/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>

#include "tiae/errors.hpp"

namespace tiae {

namespace fs = std::filesystem;

Codec model_codec(const Model& enc, const Model& dec) {
    return Codec{[&enc](const Tensor& batch) { return enc.predict(batch); },
                 [&dec](const Tensor& codes) { return dec.predict(codes); }};
}

Codec pca_codec(const PcaModel& pca, Shape item_shape) {
    return Codec{[&pca](const Tensor& batch) { return pca_encode(pca, batch); },
                 [&pca, item_shape](const Tensor& codes) {
                     Shape shape{codes.dim(0)};
                     shape.insert(shape.end(), item_shape.begin(), item_shape.end());
                     return pca_decode(pca, codes).reshaped(shape);
                 }};
}

ShiftPredictor model_predictor(const Model& regressor) {
    return [&regressor](const Tensor& batch) { return regressor.predict(batch); };
}

Tensor shifted_copies(const Dataset& items, const TransformGrid& grid) {
    std::vector<Tensor> rows;
    rows.reserve(items.size() * grid.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        const Tensor item = items.item(i);
        for (const ShiftParam& p : grid.params()) {
            rows.push_back(apply_shift(item, p));
        }
    }
    return stack(rows);
}

namespace {

Tensor shifts_of(const Tensor& item, const TransformGrid& grid) {
    std::vector<Tensor> rows;
    rows.reserve(grid.size());
    for (const ShiftParam& p : grid.params()) {
        rows.push_back(apply_shift(item, p));
    }
    return stack(rows);
}

std::span<const double> row_span(const Tensor& t, std::size_t i) {
    const std::size_t width = t.numel() / t.dim(0);
    return t.data().subspan(i * width, width);
}

} // namespace

InvarianceReport invariance_report(const Codec& codec, const Dataset& items,
                                   const TransformGrid& grid) {
    if (!items.labels()) {
        throw std::invalid_argument("invariance_report: between-class statistics need labels");
    }
    const auto& labels = *items.labels();
    const std::set<int> classes(labels.begin(), labels.end());
    if (classes.size() < 2) {
        throw std::invalid_argument("invariance_report: between-class statistics need at least 2 classes");
    }

    InvarianceReport report;
    report.classes = classes.size();
    const std::size_t g = grid.size();
    std::map<int, std::pair<std::vector<double>, std::size_t>> centroid_sums;

    for (std::size_t i = 0; i < items.size(); ++i) {
        const Tensor item = items.item(i);
        const Tensor codes = codec.encode(shifts_of(item, grid));
        const std::size_t d = codes.numel() / g;

        std::vector<double> centroid(d, 0.0);
        for (std::size_t s = 0; s < g; ++s) {
            for (std::size_t k = 0; k < d; ++k) {
                centroid[k] += codes[s * d + k];
            }
        }
        for (double& c : centroid) {
            c /= static_cast<double>(g);
        }
        double within = 0.0;
        for (std::size_t s = 0; s < g; ++s) {
            within += squared_distance(row_span(codes, s), centroid);
        }
        report.within_shift_variance.push_back(within / static_cast<double>(g));

        const Tensor restored = codec.decode(codes);
        double pair_sum = 0.0;
        std::size_t pairs = 0;
        for (std::size_t a = 0; a < g; ++a) {
            for (std::size_t b = a + 1; b < g; ++b) {
                pair_sum += std::sqrt(squared_distance(row_span(restored, a), row_span(restored, b)));
                ++pairs;
            }
        }
        report.restored_pairwise_l2.push_back(pairs ? pair_sum / static_cast<double>(pairs) : 0.0);

        const Tensor plain = codec.encode(stack(std::vector<Tensor>{item}));
        auto& [sum, count] = centroid_sums[labels[i]];
        sum.resize(plain.numel(), 0.0);
        for (std::size_t k = 0; k < plain.numel(); ++k) {
            sum[k] += plain[k];
        }
        ++count;
    }

    std::vector<std::vector<double>> centroids;
    for (auto& [label, entry] : centroid_sums) {
        for (double& v : entry.first) {
            v /= static_cast<double>(entry.second);
        }
        centroids.push_back(entry.first);
    }
    double between = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < centroids.size(); ++a) {
        for (std::size_t b = a + 1; b < centroids.size(); ++b) {
            between += squared_distance(centroids[a], centroids[b]);
            ++pairs;
        }
    }
    report.between_class_variance = between / static_cast<double>(pairs);

    const double n = static_cast<double>(items.size());
    for (double v : report.within_shift_variance) {
        report.mean_within_shift_variance += v / n;
    }
    for (double v : report.restored_pairwise_l2) {
        report.mean_restored_pairwise_l2 += v / n;
        report.max_restored_pairwise_l2 = std::max(report.max_restored_pairwise_l2, v);
    }
    if (!(report.between_class_variance > 0.0)) {
        throw DegenerateError("invariance_report: class centroids coincide");
    }
    report.ratio = report.mean_within_shift_variance / report.between_class_variance;
    return report;
}

ProjectionPlane projection_plane(const Tensor& m1, const Tensor& m2, const Tensor& m3) {
    if (m1.numel() != m2.numel() || m1.numel() != m3.numel()) {
        throw ShapeError("projection_plane: means differ in length");
    }
    const std::size_t d = m1.numel();
    std::vector<double> origin(d);
    std::vector<double> u(d);
    std::vector<double> v(d);
    double scale = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        origin[k] = (m1[k] + m2[k] + m3[k]) / 3.0;
        u[k] = m2[k] - m1[k];
        v[k] = m3[k] - m1[k];
        scale = std::max({scale, std::abs(u[k]), std::abs(v[k])});
    }
    const double u_norm = std::sqrt(sum_of_squares(u));
    if (!(u_norm > 1e-12 * std::max(1.0, scale))) {
        throw DegenerateError("projection_plane: first two means coincide");
    }
    for (double& x : u) {
        x /= u_norm;
    }
    double dot = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        dot += u[k] * v[k];
    }
    for (std::size_t k = 0; k < d; ++k) {
        v[k] -= dot * u[k];
    }
    const double v_norm = std::sqrt(sum_of_squares(v));
    if (!(v_norm > 1e-9 * std::max(1.0, scale))) {
        throw DegenerateError("projection_plane: means are collinear");
    }
    for (double& x : v) {
        x /= v_norm;
    }
    return ProjectionPlane{Tensor({d}, std::move(origin)),
                           {Tensor({d}, std::move(u)), Tensor({d}, std::move(v))}};
}

std::array<double, 2> ProjectionPlane::project(const Tensor& descriptor) const {
    if (descriptor.numel() != origin.numel()) {
        throw ShapeError("project: descriptor length " + std::to_string(descriptor.numel()) +
                         " differs from plane dimension " + std::to_string(origin.numel()));
    }
    std::array<double, 2> out{0.0, 0.0};
    for (std::size_t k = 0; k < origin.numel(); ++k) {
        const double c = descriptor[k] - origin[k];
        out[0] += c * basis[0][k];
        out[1] += c * basis[1][k];
    }
    return out;
}

namespace {

std::string gallery_name(std::size_t index, const char* kind) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "shift_%03zu_%s.pgm", index, kind);
    return buf;
}

} // namespace

std::vector<GalleryEntry> restoration_gallery(const Codec& codec, const Tensor& item,
                                              const TransformGrid& grid, const fs::path& out_dir,
                                              const ShiftPredictor& predictor) {
    fs::create_directories(out_dir);
    const Tensor inputs = shifts_of(item, grid);
    const Tensor restored = codec.decode(codec.encode(inputs));
    std::optional<Tensor> predicted;
    if (predictor) {
        predicted = predictor(inputs);
    }

    std::vector<GalleryEntry> entries;
    CsvTable index{{"index", "dx", "dy", "inferred_dx", "inferred_dy", "input", "restored", "reshifted"}, {}};
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const Tensor in = inputs.row(g);
        const Tensor out = restored.row(g);
        ShiftParam inferred;
        if (predicted) {
            inferred = grid[grid.nearest_index((*predicted)[2 * g], (*predicted)[2 * g + 1])];
        } else {
            inferred = best_shift(in, out, grid).param;
        }
        GalleryEntry e{g, grid[g], inferred, out_dir / gallery_name(g, "input"),
                       out_dir / gallery_name(g, "restored"), out_dir / gallery_name(g, "reshifted")};
        export_pgm(in, e.input);
        export_pgm(out, e.restored);
        export_pgm(apply_shift(out, inferred), e.reshifted);
        index.rows.push_back({std::to_string(g), std::to_string(e.shift.dx), std::to_string(e.shift.dy),
                              std::to_string(inferred.dx), std::to_string(inferred.dy),
                              e.input.filename().string(), e.restored.filename().string(),
                              e.reshifted.filename().string()});
        entries.push_back(std::move(e));
    }
    export_csv(index, out_dir / "gallery.csv");
    return entries;
}

Tensor contact_sheet(const fs::path& gallery_dir) {
    const CsvTable index = read_csv(gallery_dir / "gallery.csv");
    if (index.rows.empty()) {
        throw FormatError("contact_sheet: empty gallery index");
    }
    std::vector<std::size_t> columns;
    for (const char* name : {"input", "restored", "reshifted"}) {
        std::size_t c = 0;
        while (c < index.header.size() && index.header[c] != name) {
            ++c;
        }
        if (c == index.header.size()) {
            throw FormatError(std::string("contact_sheet: gallery.csv lacks column ") + name);
        }
        columns.push_back(c);
    }
    std::size_t h = 0;
    std::size_t w = 0;
    std::vector<double> sheet;
    for (std::size_t r = 0; r < index.rows.size(); ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            const Tensor tile = read_pgm(gallery_dir / index.rows[r][columns[c]]);
            if (h == 0) {
                h = tile.dim(0);
                w = tile.dim(1);
                sheet.assign(index.rows.size() * h * 3 * w, 0.0);
            } else if (tile.dim(0) != h || tile.dim(1) != w) {
                throw FormatError("contact_sheet: tiles differ in size");
            }
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    sheet[(r * h + y) * 3 * w + c * w + x] = tile[y * w + x];
                }
            }
        }
    }
    return Tensor({index.rows.size() * h, 3 * w}, std::move(sheet));
}

ShiftAccuracy shift_inference_accuracy(const ShiftPredictor& predictor, const Codec& codec,
                                       const Dataset& items, const TransformGrid& grid) {
    ShiftAccuracy acc;
    double abs_snapped = 0.0;
    double abs_raw = 0.0;
    std::size_t within = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const Tensor inputs = shifts_of(items.item(i), grid);
        const Tensor restored = codec.decode(codec.encode(inputs));
        const Tensor pred = predictor(inputs);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            ShiftRecord r;
            r.item = i;
            r.grid_index = g;
            r.target = best_shift(inputs.row(g), restored.row(g), grid).param;
            r.raw_dx = pred[2 * g];
            r.raw_dy = pred[2 * g + 1];
            r.snapped = grid[grid.nearest_index(r.raw_dx, r.raw_dy)];
            const int ex = std::abs(r.snapped.dx - r.target.dx);
            const int ey = std::abs(r.snapped.dy - r.target.dy);
            abs_snapped += 0.5 * (ex + ey);
            abs_raw += 0.5 * (std::abs(r.raw_dx - r.target.dx) + std::abs(r.raw_dy - r.target.dy));
            within += (ex <= 2 && ey <= 2) ? 1 : 0;
            acc.records.push_back(r);
        }
    }
    if (!acc.records.empty()) {
        const double n = static_cast<double>(acc.records.size());
        acc.mae = abs_snapped / n;
        acc.raw_mae = abs_raw / n;
        acc.fraction_within_2px = static_cast<double>(within) / n;
    }
    return acc;
}

} // namespace tiae
