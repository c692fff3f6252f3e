#include "tiae/transforms.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <stdexcept>

#include "tiae/errors.hpp"

namespace tiae {

TransformGrid::TransformGrid(std::vector<ShiftParam> params) : params_(std::move(params)) {
    if (params_.empty()) {
        throw std::invalid_argument("transform grid must not be empty");
    }
    std::set<ShiftParam> seen;
    for (const auto& p : params_) {
        if (!seen.insert(p).second) {
            throw std::invalid_argument("duplicate shift (" + std::to_string(p.dx) + ", " +
                                        std::to_string(p.dy) + ") in transform grid");
        }
    }
}

TransformGrid TransformGrid::square(std::span<const int> values) {
    std::vector<ShiftParam> params;
    params.reserve(values.size() * values.size());
    for (int dy : values) {
        for (int dx : values) {
            params.push_back({dx, dy});
        }
    }
    return TransformGrid(std::move(params));
}

TransformGrid TransformGrid::identity_only() { return TransformGrid({ShiftParam{0, 0}}); }

std::optional<std::size_t> TransformGrid::index_of(ShiftParam p) const {
    const auto it = std::find(params_.begin(), params_.end(), p);
    if (it == params_.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - params_.begin());
}

std::size_t TransformGrid::nearest_index(double dx, double dy) const {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const double ex = params_[i].dx - dx;
        const double ey = params_[i].dy - dy;
        const double d = ex * ex + ey * ey;
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

TransformGrid paper_grid() {
    static constexpr int values[] = {-8, -6, -4, -2, 0, 2, 4, 6, 8};
    return TransformGrid::square(values);
}

TransformGrid desk_grid() {
    static constexpr int values[] = {-4, -2, 0, 2, 4};
    return TransformGrid::square(values);
}

namespace {

// out(y, x) = in(y + dy, x + dx) for every trailing h x w plane.
void shift_planes(std::span<const double> in, std::span<double> out, std::size_t planes,
                  std::size_t h, std::size_t w, ShiftParam p) {
    const auto sh = static_cast<long>(h);
    const auto sw = static_cast<long>(w);
    for (std::size_t plane = 0; plane < planes; ++plane) {
        const double* src = in.data() + plane * h * w;
        double* dst = out.data() + plane * h * w;
        for (long y = 0; y < sh; ++y) {
            const long sy = y + p.dy;
            for (long x = 0; x < sw; ++x) {
                const long sx = x + p.dx;
                dst[y * sw + x] =
                    (sy >= 0 && sy < sh && sx >= 0 && sx < sw) ? src[sy * sw + sx] : 0.0;
            }
        }
    }
}

// Adjoint of shift_planes: accumulates out-gradients back to their source pixels.
void unshift_planes_add(std::span<const double> grad_out, std::span<double> grad_in,
                        std::size_t planes, std::size_t h, std::size_t w, ShiftParam p) {
    const auto sh = static_cast<long>(h);
    const auto sw = static_cast<long>(w);
    for (std::size_t plane = 0; plane < planes; ++plane) {
        const double* go = grad_out.data() + plane * h * w;
        double* gi = grad_in.data() + plane * h * w;
        for (long y = 0; y < sh; ++y) {
            const long sy = y + p.dy;
            if (sy < 0 || sy >= sh) {
                continue;
            }
            for (long x = 0; x < sw; ++x) {
                const long sx = x + p.dx;
                if (sx >= 0 && sx < sw) {
                    gi[sy * sw + sx] += go[y * sw + x];
                }
            }
        }
    }
}

void require_image(const Tensor& t, const char* op) {
    if (t.rank() < 2) {
        throw ShapeError(std::string(op) + ": expected at least [h x w], got " +
                         shape_to_string(t.shape()));
    }
}

} // namespace

Tensor apply_shift(const Tensor& image, ShiftParam p) {
    require_image(image, "apply_shift");
    const std::size_t h = image.dim(image.rank() - 2);
    const std::size_t w = image.dim(image.rank() - 1);
    Tensor out(image.shape());
    shift_planes(image.data(), out.data(), image.numel() / (h * w), h, w, p);
    return out;
}

std::vector<double> shift_residuals(const Tensor& target, const Tensor& candidate,
                                    const TransformGrid& grid) {
    if (target.shape() != candidate.shape()) {
        throw ShapeError("best_shift: target " + shape_to_string(target.shape()) +
                         " vs candidate " + shape_to_string(candidate.shape()));
    }
    std::vector<double> residuals;
    residuals.reserve(grid.size());
    for (const auto& p : grid.params()) {
        residuals.push_back(squared_distance(target.data(), apply_shift(candidate, p).data()));
    }
    return residuals;
}

BestShift best_shift(const Tensor& target, const Tensor& candidate, const TransformGrid& grid) {
    const auto residuals = shift_residuals(target, candidate, grid);
    const auto it = std::min_element(residuals.begin(), residuals.end());
    const auto index = static_cast<std::size_t>(it - residuals.begin());
    return BestShift{grid[index], index, *it};
}

namespace ad {

Var shift(Var images, std::vector<ShiftParam> params) {
    const Tensor& x = images.value();
    if (x.rank() < 3) {
        throw ShapeError("shift: expected [batch x ... x h x w], got " + shape_to_string(x.shape()));
    }
    if (params.size() != x.dim(0)) {
        throw ShapeError("shift: " + std::to_string(params.size()) + " parameters for " +
                         std::to_string(x.dim(0)) + " rows");
    }
    const std::size_t h = x.dim(x.rank() - 2);
    const std::size_t w = x.dim(x.rank() - 1);
    const std::size_t row = x.numel() / x.dim(0);
    const std::size_t planes = row / (h * w);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < params.size(); ++i) {
        shift_planes(x.data().subspan(i * row, row), out.data().subspan(i * row, row), planes, h, w,
                     params[i]);
    }
    const NodeId ix = images.id();
    return images.graph().record(
        "shift", std::move(out), {images},
        [ix, params = std::move(params), row, planes, h, w](Graph& g, const Tensor& go) {
            Tensor dx(g.value(ix).shape(), 0.0);
            for (std::size_t i = 0; i < params.size(); ++i) {
                unshift_planes_add(go.data().subspan(i * row, row), dx.data().subspan(i * row, row),
                                   planes, h, w, params[i]);
            }
            g.accumulate(ix, std::move(dx));
        });
}

} // namespace ad

} // namespace tiae
