#include "tiae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tiae/errors.hpp"

namespace tiae {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto extent : shape) {
        n *= extent;
    }
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != 0) {
            os << "x";
        }
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void check_extents(const Shape& shape) {
    if (shape.empty()) {
        throw ShapeError("tensor shape must have at least one axis");
    }
    for (auto extent : shape) {
        if (extent == 0) {
            throw ShapeError("tensor extents must be positive, got " + shape_to_string(shape));
        }
    }
}

} // namespace

Tensor::Tensor() : shape_{1}, data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_extents(shape_);
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    check_extents(shape_);
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("shape " + shape_to_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
    }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    if (rows.size() == 0) {
        throw ShapeError("matrix needs at least one row");
    }
    const std::size_t cols = rows.begin()->size();
    std::vector<double> values;
    values.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        if (r.size() != cols) {
            throw ShapeError("ragged matrix rows");
        }
        values.insert(values.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                         shape_to_string(shape_));
    }
    return shape_[axis];
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_to_string(shape_));
    }
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " +
                         shape_to_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
    if (begin >= end || end > shape_[0]) {
        throw ShapeError("row slice out of range");
    }
    const std::size_t stride = data_.size() / shape_[0];
    Shape out = shape_;
    out[0] = end - begin;
    return Tensor(std::move(out),
                  std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                      data_.begin() + static_cast<std::ptrdiff_t>(end * stride)));
}

Tensor Tensor::row(std::size_t index) const {
    Tensor r = slice_rows(index, index + 1);
    if (shape_.size() == 1) {
        return r;
    }
    return r.reshaped(Shape(shape_.begin() + 1, shape_.end()));
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::require_finite(const char* context) const {
    if (!all_finite()) {
        throw NumericError(std::string("non-finite value produced by ") + context);
    }
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

Tensor stack(std::span<const Tensor> items) {
    if (items.empty()) {
        throw ShapeError("cannot stack zero tensors");
    }
    const Shape& inner = items.front().shape();
    Shape out{items.size()};
    out.insert(out.end(), inner.begin(), inner.end());
    std::vector<double> values;
    values.reserve(shape_numel(out));
    for (const auto& t : items) {
        if (t.shape() != inner) {
            throw ShapeError("stack: mismatched shapes " + shape_to_string(inner) + " and " +
                             shape_to_string(t.shape()));
        }
        values.insert(values.end(), t.values().begin(), t.values().end());
    }
    return Tensor(std::move(out), std::move(values));
}

double sum_of_squares(std::span<const double> values) noexcept {
    double s = 0.0;
    for (double v : values) {
        s += v * v;
    }
    return s;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("squared_distance: length mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

} // namespace tiae
