#pragma once

#include <cstddef>

#include "tiae/autodiff.hpp"
#include "tiae/rng.hpp"
#include "tiae/tensor.hpp"

namespace tiae {

/// 2-D cross-correlation (no kernel flip) with zero padding.
struct Conv2dLayer {
    Tensor kernel; // [out_ch x in_ch x kh x kw]
    Tensor bias;   // [out_ch]
    std::size_t stride = 1;
    std::size_t padding = 0;
};

struct DenseLayer {
    Tensor weight; // [out x in]
    Tensor bias;   // [out]
};

struct MaxPool2d {
    std::size_t window = 2;
    std::size_t stride = 2;
};

/// floor((in + 2 pad - k) / stride) + 1; throws ShapeError when it would be < 1.
std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);
std::size_t pool_output_extent(std::size_t in, std::size_t window, std::size_t stride);

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero bias.
Conv2dLayer make_conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, Rng& rng,
                        std::size_t stride = 1, std::size_t padding = 0);
DenseLayer make_dense(std::size_t in, std::size_t out, Rng& rng);

namespace ad {

/// x [batch x in_ch x h x w], kernel [out_ch x in_ch x kh x kw], bias [out_ch].
Var conv2d(Var x, Var kernel, Var bias, std::size_t stride, std::size_t padding);

/// Windowed max over each channel. The gradient is routed to the first
/// maximal element of each window in row-major scan order.
Var maxpool2d(Var x, std::size_t window, std::size_t stride);

/// x [batch x in] -> x * weight^T + bias, weight [out x in].
Var linear(Var x, Var weight, Var bias);

} // namespace ad

// Graph-free evaluation of single layers.
Tensor conv2d_forward(const Conv2dLayer& layer, const Tensor& x);
Tensor maxpool_forward(const MaxPool2d& pool, const Tensor& x);
Tensor dense_forward(const DenseLayer& layer, const Tensor& x);

} // namespace tiae
