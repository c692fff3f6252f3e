#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "tiae/autodiff.hpp"
#include "tiae/tensor.hpp"

namespace tiae {

/// Integer 2-D translation: (T(I))(x, y) = I(x + dx, y + dy), x = column, y = row.
struct ShiftParam {
    int dx = 0;
    int dy = 0;

    auto operator<=>(const ShiftParam&) const = default;
};

/// Finite, ordered family of ignored transforms. Order matters: every argmin
/// over the grid breaks ties toward the earliest element.
class TransformGrid {
public:
    /// Throws std::invalid_argument when empty or when a parameter repeats.
    explicit TransformGrid(std::vector<ShiftParam> params);

    /// Cartesian product values x values, row-major over (dy, dx) ascending.
    static TransformGrid square(std::span<const int> values);
    static TransformGrid identity_only();

    const std::vector<ShiftParam>& params() const noexcept { return params_; }
    std::size_t size() const noexcept { return params_.size(); }
    const ShiftParam& operator[](std::size_t i) const { return params_.at(i); }

    std::optional<std::size_t> index_of(ShiftParam p) const;
    bool contains(ShiftParam p) const { return index_of(p).has_value(); }
    bool contains_identity() const { return contains({0, 0}); }

    /// Grid element nearest to a continuous (dx, dy), earliest on ties.
    std::size_t nearest_index(double dx, double dy) const;

private:
    std::vector<ShiftParam> params_;
};

/// {-8, -6, ..., 8}^2: 81 shifts.
TransformGrid paper_grid();
/// {-4, -2, 0, 2, 4}^2: 25 shifts, the desk-scale profile.
TransformGrid desk_grid();

/// Shifts the two trailing axes of `image` (any rank >= 2); positions that
/// fall outside the source read 0.
Tensor apply_shift(const Tensor& image, ShiftParam p);

/// Squared residuals ||target - T_theta(candidate)||^2 for every grid element.
std::vector<double> shift_residuals(const Tensor& target, const Tensor& candidate,
                                    const TransformGrid& grid);

struct BestShift {
    ShiftParam param;
    std::size_t index = 0;
    double residual = 0.0;
};

/// Exhaustive argmin over `grid` of ||target - T_theta(candidate)||^2.
BestShift best_shift(const Tensor& target, const Tensor& candidate, const TransformGrid& grid);

namespace ad {

/// Shifts row i of `images` [batch x ... x h x w] by params[i]. The gradient
/// is the adjoint shift (zero fill), so it flows back into `images`.
Var shift(Var images, std::vector<ShiftParam> params);

} // namespace ad

} // namespace tiae
