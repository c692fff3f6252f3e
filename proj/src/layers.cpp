#include "tiae/layers.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "tiae/errors.hpp"

namespace tiae {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride,
                               std::size_t pad) {
    if (stride == 0) {
        throw ShapeError("convolution stride must be positive");
    }
    if (in + 2 * pad < k) {
        throw ShapeError("convolution output extent < 1 (input " + std::to_string(in) +
                         ", kernel " + std::to_string(k) + ", padding " + std::to_string(pad) + ")");
    }
    return (in + 2 * pad - k) / stride + 1;
}

std::size_t pool_output_extent(std::size_t in, std::size_t window, std::size_t stride) {
    if (window == 0 || stride == 0) {
        throw ShapeError("pool window and stride must be positive");
    }
    if (window > in) {
        throw ShapeError("pool window " + std::to_string(window) + " larger than input extent " +
                         std::to_string(in));
    }
    return (in - window) / stride + 1;
}

namespace {

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(std::move(shape));
    for (double& v : t.data()) {
        v = rng.uniform(-limit, limit);
    }
    return t;
}

} // namespace

Conv2dLayer make_conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, Rng& rng,
                        std::size_t stride, std::size_t padding) {
    const std::size_t area = kernel * kernel;
    return Conv2dLayer{glorot({out_ch, in_ch, kernel, kernel}, in_ch * area, out_ch * area, rng),
                       Tensor({out_ch}, 0.0), stride, padding};
}

DenseLayer make_dense(std::size_t in, std::size_t out, Rng& rng) {
    return DenseLayer{glorot({out, in}, in, out, rng), Tensor({out}, 0.0)};
}

namespace {

struct ConvGeometry {
    std::size_t batch, in_ch, h, w;
    std::size_t out_ch, kh, kw;
    std::size_t stride, pad;
    std::size_t out_h, out_w;

    std::size_t patch() const { return in_ch * kh * kw; }
    std::size_t positions() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                           std::size_t stride, std::size_t pad) {
    if (x.rank() != 4) {
        throw ShapeError("conv2d: input must be [batch x ch x h x w], got " +
                         shape_to_string(x.shape()));
    }
    if (kernel.rank() != 4) {
        throw ShapeError("conv2d: kernel must be [out x in x kh x kw]");
    }
    if (kernel.dim(1) != x.dim(1)) {
        throw ShapeError("conv2d: channel mismatch, kernel expects " + std::to_string(kernel.dim(1)) +
                         " input channels, got " + std::to_string(x.dim(1)));
    }
    if (bias.numel() != kernel.dim(0)) {
        throw ShapeError("conv2d: bias length does not match output channels");
    }
    ConvGeometry g{x.dim(0),      x.dim(1), x.dim(2), x.dim(3), kernel.dim(0), kernel.dim(2),
                   kernel.dim(3), stride,   pad,      0,        0};
    g.out_h = conv_output_extent(g.h, g.kh, stride, pad);
    g.out_w = conv_output_extent(g.w, g.kw, stride, pad);
    return g;
}

// cols[(c, ky, kx), (b, oy, ox)] = x[b, c, oy*s + ky - pad, ox*s + kx - pad] (0 outside).
RowMatrix im2col(const ConvGeometry& g, const Tensor& x) {
    const std::size_t cols_per_batch = g.positions();
    RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(g.patch()),
                                     static_cast<Eigen::Index>(g.batch * cols_per_batch));
    for (std::size_t c = 0; c < g.in_ch; ++c) {
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const auto r = static_cast<Eigen::Index>((c * g.kh + ky) * g.kw + kx);
                for (std::size_t b = 0; b < g.batch; ++b) {
                    const double* plane = x.data().data() + (b * g.in_ch + c) * g.h * g.w;
                    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                        static_cast<std::ptrdiff_t>(g.pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
                            continue;
                        }
                        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                            static_cast<std::ptrdiff_t>(g.pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) {
                                continue;
                            }
                            cols(r, static_cast<Eigen::Index>(b * cols_per_batch + oy * g.out_w + ox)) =
                                plane[static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)];
                        }
                    }
                }
            }
        }
    }
    return cols;
}

void col2im(const ConvGeometry& g, const RowMatrix& cols, Tensor& dx) {
    const std::size_t cols_per_batch = g.positions();
    for (std::size_t c = 0; c < g.in_ch; ++c) {
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const auto r = static_cast<Eigen::Index>((c * g.kh + ky) * g.kw + kx);
                for (std::size_t b = 0; b < g.batch; ++b) {
                    double* plane = dx.data().data() + (b * g.in_ch + c) * g.h * g.w;
                    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                        static_cast<std::ptrdiff_t>(g.pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
                            continue;
                        }
                        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                            static_cast<std::ptrdiff_t>(g.pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) {
                                continue;
                            }
                            plane[static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)] +=
                                cols(r, static_cast<Eigen::Index>(b * cols_per_batch + oy * g.out_w + ox));
                        }
                    }
                }
            }
        }
    }
}

} // namespace

namespace ad {

Var conv2d(Var x, Var kernel, Var bias, std::size_t stride, std::size_t padding) {
    const ConvGeometry g = conv_geometry(x.value(), kernel.value(), bias.value(), stride, padding);
    const auto patch = static_cast<Eigen::Index>(g.patch());
    const auto out_ch = static_cast<Eigen::Index>(g.out_ch);
    const auto total_cols = static_cast<Eigen::Index>(g.batch * g.positions());

    const RowMatrix cols = im2col(g, x.value());
    RowMatrix y = ConstMatMap(kernel.value().data().data(), out_ch, patch) * cols;

    const std::size_t positions = g.positions();
    Tensor out({g.batch, g.out_ch, g.out_h, g.out_w});
    for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::size_t o = 0; o < g.out_ch; ++o) {
            const double bo = bias.value()[o];
            for (std::size_t p = 0; p < positions; ++p) {
                out[(b * g.out_ch + o) * positions + p] =
                    y(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(b * positions + p)) + bo;
            }
        }
    }

    const NodeId ix = x.id();
    const NodeId ik = kernel.id();
    const NodeId ib = bias.id();
    return x.graph().record(
        "conv2d", std::move(out), {x, kernel, bias},
        [g, ix, ik, ib, patch, out_ch, total_cols, positions](Graph& graph, const Tensor& go) {
            RowMatrix gy(out_ch, total_cols);
            for (std::size_t b = 0; b < g.batch; ++b) {
                for (std::size_t o = 0; o < g.out_ch; ++o) {
                    for (std::size_t p = 0; p < positions; ++p) {
                        gy(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(b * positions + p)) =
                            go[(b * g.out_ch + o) * positions + p];
                    }
                }
            }
            if (graph.requires_grad(ib)) {
                Tensor db({g.out_ch}, 0.0);
                for (std::size_t o = 0; o < g.out_ch; ++o) {
                    db[o] = gy.row(static_cast<Eigen::Index>(o)).sum();
                }
                graph.accumulate(ib, std::move(db));
            }
            if (graph.requires_grad(ik)) {
                const RowMatrix cols = im2col(g, graph.value(ix));
                Tensor dk(graph.value(ik).shape());
                MatMap(dk.data().data(), out_ch, patch).noalias() = gy * cols.transpose();
                graph.accumulate(ik, std::move(dk));
            }
            if (graph.requires_grad(ix)) {
                const RowMatrix dcols =
                    ConstMatMap(graph.value(ik).data().data(), out_ch, patch).transpose() * gy;
                Tensor dx(graph.value(ix).shape(), 0.0);
                col2im(g, dcols, dx);
                graph.accumulate(ix, std::move(dx));
            }
        });
}

Var maxpool2d(Var x, std::size_t window, std::size_t stride) {
    const Tensor& xv = x.value();
    if (xv.rank() != 4) {
        throw ShapeError("maxpool2d: input must be [batch x ch x h x w], got " +
                         shape_to_string(xv.shape()));
    }
    const std::size_t planes = xv.dim(0) * xv.dim(1);
    const std::size_t h = xv.dim(2);
    const std::size_t w = xv.dim(3);
    const std::size_t oh = pool_output_extent(h, window, stride);
    const std::size_t ow = pool_output_extent(w, window, stride);

    Tensor out({xv.dim(0), xv.dim(1), oh, ow});
    std::vector<std::size_t> argmax(out.numel());
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_index = 0;
                for (std::size_t ky = 0; ky < window; ++ky) {
                    for (std::size_t kx = 0; kx < window; ++kx) {
                        const std::size_t idx = p * h * w + (oy * stride + ky) * w + ox * stride + kx;
                        if (xv[idx] > best) {
                            best = xv[idx];
                            best_index = idx;
                        }
                    }
                }
                const std::size_t o = (p * oh + oy) * ow + ox;
                out[o] = best;
                argmax[o] = best_index;
            }
        }
    }
    const NodeId ix = x.id();
    return x.graph().record("maxpool2d", std::move(out), {x},
                            [ix, argmax = std::move(argmax)](Graph& graph, const Tensor& go) {
                                Tensor dx(graph.value(ix).shape(), 0.0);
                                for (std::size_t o = 0; o < argmax.size(); ++o) {
                                    dx[argmax[o]] += go[o];
                                }
                                graph.accumulate(ix, std::move(dx));
                            });
}

Var linear(Var x, Var weight, Var bias) {
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1)) {
        throw ShapeError("dense: width mismatch, input " + shape_to_string(xv.shape()) +
                         " vs weight " + shape_to_string(wv.shape()));
    }
    if (bias.value().numel() != wv.dim(0)) {
        throw ShapeError("dense: bias length does not match output width");
    }
    const auto rows = static_cast<Eigen::Index>(xv.dim(0));
    const auto in = static_cast<Eigen::Index>(wv.dim(1));
    const auto out_w = static_cast<Eigen::Index>(wv.dim(0));
    Tensor out({xv.dim(0), wv.dim(0)});
    {
        MatMap y(out.data().data(), rows, out_w);
        y.noalias() = ConstMatMap(xv.data().data(), rows, in) *
                      ConstMatMap(wv.data().data(), out_w, in).transpose();
        y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().data().data(), out_w);
    }
    const NodeId ix = x.id();
    const NodeId iw = weight.id();
    const NodeId ib = bias.id();
    return x.graph().record(
        "linear", std::move(out), {x, weight, bias},
        [ix, iw, ib, rows, in, out_w](Graph& g, const Tensor& go) {
            ConstMatMap gy(go.data().data(), rows, out_w);
            if (g.requires_grad(ix)) {
                Tensor dx(g.value(ix).shape());
                MatMap(dx.data().data(), rows, in).noalias() =
                    gy * ConstMatMap(g.value(iw).data().data(), out_w, in);
                g.accumulate(ix, std::move(dx));
            }
            if (g.requires_grad(iw)) {
                Tensor dw(g.value(iw).shape());
                MatMap(dw.data().data(), out_w, in).noalias() =
                    gy.transpose() * ConstMatMap(g.value(ix).data().data(), rows, in);
                g.accumulate(iw, std::move(dw));
            }
            if (g.requires_grad(ib)) {
                Tensor db(g.value(ib).shape());
                Eigen::Map<Eigen::RowVectorXd>(db.data().data(), out_w) = gy.colwise().sum();
                g.accumulate(ib, std::move(db));
            }
        });
}

} // namespace ad

Tensor conv2d_forward(const Conv2dLayer& layer, const Tensor& x) {
    ad::Graph g;
    return ad::conv2d(g.constant(x), g.constant(layer.kernel), g.constant(layer.bias), layer.stride,
                      layer.padding)
        .value();
}

Tensor maxpool_forward(const MaxPool2d& pool, const Tensor& x) {
    ad::Graph g;
    return ad::maxpool2d(g.constant(x), pool.window, pool.stride).value();
}

Tensor dense_forward(const DenseLayer& layer, const Tensor& x) {
    ad::Graph g;
    Tensor input = x.rank() == 1 ? x.reshaped({1, x.numel()}) : x;
    Tensor y = ad::linear(g.constant(input), g.constant(layer.weight), g.constant(layer.bias)).value();
    return x.rank() == 1 ? y.reshaped({y.numel()}) : y;
}

} // namespace tiae
