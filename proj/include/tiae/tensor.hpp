#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tiae {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles. Every extent is positive and the element
/// count always equals the product of the extents. A scalar has shape {1}.
class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double value);
    static Tensor vector(std::initializer_list<double> values);
    /// Builds a 2-D tensor from nested rows; all rows must have equal length.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const noexcept { return data_.size(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// Value of a one-element tensor.
    double item() const;

    /// Same values under a new shape with the same element count.
    Tensor reshaped(Shape shape) const;

    /// Rows [begin, end) along axis 0.
    Tensor slice_rows(std::size_t begin, std::size_t end) const;
    /// Row `index` along axis 0, keeping the remaining axes.
    Tensor row(std::size_t index) const;

    bool all_finite() const noexcept;
    /// Throws NumericError naming `context` when a NaN or Inf is present.
    void require_finite(const char* context) const;

    void fill(double value) noexcept;

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);

double sum_of_squares(std::span<const double> values) noexcept;
double squared_distance(std::span<const double> a, std::span<const double> b);

} // namespace tiae
