#include "tiae/autodiff.hpp"

#include <cmath>

#include <Eigen/Core>

#include "tiae/errors.hpp"

namespace tiae::ad {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

const Tensor& Var::value() const {
    if (graph_ == nullptr) {
        throw GraphError("use of an unbound Var");
    }
    return graph_->value(id_);
}

Var Graph::leaf(Tensor value, bool requires_grad) {
    value.require_finite("leaf");
    nodes_.push_back(Node{"leaf", std::move(value), {}, {}, requires_grad});
    grads_.emplace_back();
    return Var(this, nodes_.size() - 1);
}

Var Graph::record(const char* op, Tensor value, const std::vector<Var>& inputs,
                  BackwardFn backward) {
    value.require_finite(op);
    Node node;
    node.op = op;
    node.value = std::move(value);
    for (const Var& in : inputs) {
        if (&in.graph() != this) {
            throw GraphError(std::string(op) + ": input belongs to a different graph");
        }
        node.inputs.push_back(in.id());
        node.requires_grad = node.requires_grad || nodes_.at(in.id()).requires_grad;
    }
    if (node.requires_grad) {
        node.backward = std::move(backward);
    }
    nodes_.push_back(std::move(node));
    grads_.emplace_back();
    return Var(this, nodes_.size() - 1);
}

void Graph::accumulate(NodeId id, const Tensor& delta) { accumulate(id, Tensor(delta)); }

void Graph::accumulate(NodeId id, Tensor&& delta) {
    const Node& node = nodes_.at(id);
    if (!node.requires_grad) {
        return;
    }
    if (delta.shape() != node.value.shape()) {
        throw ShapeError("gradient shape " + shape_to_string(delta.shape()) +
                         " does not match node shape " + shape_to_string(node.value.shape()) +
                         " (" + node.op + ")");
    }
    auto& slot = grads_[id];
    if (!slot) {
        slot = std::move(delta);
        return;
    }
    auto dst = slot->data();
    auto src = delta.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
}

void Graph::backward(Var root) {
    if (&root.graph() != this) {
        throw GraphError("backward: root belongs to a different graph");
    }
    const Node& root_node = nodes_.at(root.id());
    if (root_node.value.numel() != 1) {
        throw GraphError("backward: root must be scalar, got shape " +
                         shape_to_string(root_node.value.shape()));
    }
    accumulate(root.id(), Tensor(root_node.value.shape(), 1.0));
    for (NodeId id = root.id() + 1; id-- > 0;) {
        const Node& node = nodes_[id];
        if (!grads_[id] || !node.backward) {
            continue;
        }
        for (NodeId in : node.inputs) {
            if (in >= id) {
                throw GraphError("cycle detected at node " + std::to_string(id) + " (" + node.op +
                                 ")");
            }
        }
        // Backward fns only write to slots of smaller ids, so this reference stays valid.
        node.backward(*this, *grads_[id]);
    }
}

Tensor Graph::grad(Var v) const {
    const auto& slot = grads_.at(v.id());
    if (slot) {
        return *slot;
    }
    return Tensor(nodes_.at(v.id()).value.shape(), 0.0);
}

void Graph::zero_grad() {
    for (auto& g : grads_) {
        g.reset();
    }
}

namespace {

enum class Broadcast { Same, LeftScalar, RightScalar };

Broadcast check_broadcast(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) {
        return Broadcast::Same;
    }
    if (a.numel() == 1) {
        return Broadcast::LeftScalar;
    }
    if (b.numel() == 1) {
        return Broadcast::RightScalar;
    }
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
}

const Shape& result_shape(Broadcast mode, const Tensor& a, const Tensor& b) {
    return mode == Broadcast::LeftScalar ? b.shape() : a.shape();
}

template <typename F>
Tensor elementwise(Broadcast mode, const Tensor& a, const Tensor& b, F f) {
    Tensor out(result_shape(mode, a, b));
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double x = mode == Broadcast::LeftScalar ? a[0] : a[i];
        const double y = mode == Broadcast::RightScalar ? b[0] : b[i];
        o[i] = f(x, y);
    }
    return out;
}

// Reduces a full-size gradient back onto an operand that may have been
// broadcast from a single element.
Tensor reduce_to(const Tensor& full, const Shape& target) {
    if (full.shape() == target) {
        return full;
    }
    double s = 0.0;
    for (double v : full.data()) {
        s += v;
    }
    return Tensor(target, s);
}

template <typename DA, typename DB>
Var binary(const char* op, Var a, Var b, Tensor value, DA grad_a, DB grad_b) {
    const NodeId ia = a.id();
    const NodeId ib = b.id();
    return a.graph().record(op, std::move(value), {a, b},
                            [ia, ib, grad_a, grad_b](Graph& g, const Tensor& go) {
                                const Tensor& av = g.value(ia);
                                const Tensor& bv = g.value(ib);
                                if (g.requires_grad(ia)) {
                                    g.accumulate(ia, reduce_to(grad_a(go, av, bv), av.shape()));
                                }
                                if (g.requires_grad(ib)) {
                                    g.accumulate(ib, reduce_to(grad_b(go, av, bv), bv.shape()));
                                }
                            });
}

} // namespace

Var add(Var a, Var b) {
    const auto mode = check_broadcast("add", a.value(), b.value());
    return binary(
        "add", a, b, elementwise(mode, a.value(), b.value(), [](double x, double y) { return x + y; }),
        [](const Tensor& go, const Tensor&, const Tensor&) { return go; },
        [](const Tensor& go, const Tensor&, const Tensor&) { return go; });
}

Var sub(Var a, Var b) {
    const auto mode = check_broadcast("sub", a.value(), b.value());
    return binary(
        "sub", a, b, elementwise(mode, a.value(), b.value(), [](double x, double y) { return x - y; }),
        [](const Tensor& go, const Tensor&, const Tensor&) { return go; },
        [](const Tensor& go, const Tensor&, const Tensor&) {
            Tensor out = go;
            for (double& v : out.data()) {
                v = -v;
            }
            return out;
        });
}

Var mul(Var a, Var b) {
    const auto mode = check_broadcast("mul", a.value(), b.value());
    return binary(
        "mul", a, b, elementwise(mode, a.value(), b.value(), [](double x, double y) { return x * y; }),
        [mode](const Tensor& go, const Tensor&, const Tensor& bv) {
            return elementwise(mode == Broadcast::RightScalar ? Broadcast::RightScalar : Broadcast::Same,
                               go, bv, [](double g, double y) { return g * y; });
        },
        [mode](const Tensor& go, const Tensor& av, const Tensor&) {
            return elementwise(mode == Broadcast::LeftScalar ? Broadcast::RightScalar : Broadcast::Same,
                               go, av, [](double g, double x) { return g * x; });
        });
}

Var div(Var a, Var b) {
    const auto mode = check_broadcast("div", a.value(), b.value());
    for (double v : b.value().data()) {
        if (v == 0.0) {
            throw NumericError("div: division by zero");
        }
    }
    return binary(
        "div", a, b, elementwise(mode, a.value(), b.value(), [](double x, double y) { return x / y; }),
        [mode](const Tensor& go, const Tensor&, const Tensor& bv) {
            return elementwise(mode == Broadcast::RightScalar ? Broadcast::RightScalar : Broadcast::Same,
                               go, bv, [](double g, double y) { return g / y; });
        },
        [mode](const Tensor& go, const Tensor& av, const Tensor& bv) {
            // d(x/y)/dy = -x / y^2, evaluated on the broadcast result shape.
            Tensor out(go.shape());
            auto o = out.data();
            for (std::size_t i = 0; i < o.size(); ++i) {
                const double x = mode == Broadcast::LeftScalar ? av[0] : av[i];
                const double y = mode == Broadcast::RightScalar ? bv[0] : bv[i];
                o[i] = -go[i] * x / (y * y);
            }
            return out;
        });
}

Var scale(Var a, double factor) {
    Tensor out = a.value();
    for (double& v : out.data()) {
        v *= factor;
    }
    const NodeId ia = a.id();
    return a.graph().record("scale", std::move(out), {a}, [ia, factor](Graph& g, const Tensor& go) {
        Tensor d = go;
        for (double& v : d.data()) {
            v *= factor;
        }
        g.accumulate(ia, std::move(d));
    });
}

Var add_scalar(Var a, double offset) {
    Tensor out = a.value();
    for (double& v : out.data()) {
        v += offset;
    }
    const NodeId ia = a.id();
    return a.graph().record("add_scalar", std::move(out), {a},
                            [ia](Graph& g, const Tensor& go) { g.accumulate(ia, go); });
}

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
        throw ShapeError("matmul: dimension mismatch " + shape_to_string(av.shape()) + " * " +
                         shape_to_string(bv.shape()));
    }
    const auto m = static_cast<Eigen::Index>(av.dim(0));
    const auto k = static_cast<Eigen::Index>(av.dim(1));
    const auto n = static_cast<Eigen::Index>(bv.dim(1));
    Tensor out({av.dim(0), bv.dim(1)});
    MatMap(out.data().data(), m, n).noalias() =
        ConstMatMap(av.data().data(), m, k) * ConstMatMap(bv.data().data(), k, n);
    const NodeId ia = a.id();
    const NodeId ib = b.id();
    return a.graph().record("matmul", std::move(out), {a, b},
                            [ia, ib, m, k, n](Graph& g, const Tensor& go) {
                                ConstMatMap gm(go.data().data(), m, n);
                                if (g.requires_grad(ia)) {
                                    Tensor da({static_cast<std::size_t>(m), static_cast<std::size_t>(k)});
                                    MatMap(da.data().data(), m, k).noalias() =
                                        gm * ConstMatMap(g.value(ib).data().data(), k, n).transpose();
                                    g.accumulate(ia, std::move(da));
                                }
                                if (g.requires_grad(ib)) {
                                    Tensor db({static_cast<std::size_t>(k), static_cast<std::size_t>(n)});
                                    MatMap(db.data().data(), k, n).noalias() =
                                        ConstMatMap(g.value(ia).data().data(), m, k).transpose() * gm;
                                    g.accumulate(ib, std::move(db));
                                }
                            });
}

namespace {

Tensor transposed(const Tensor& t) {
    const std::size_t r = t.dim(0);
    const std::size_t c = t.dim(1);
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            out[j * r + i] = t[i * c + j];
        }
    }
    return out;
}

} // namespace

Var transpose(Var a) {
    if (a.value().rank() != 2) {
        throw ShapeError("transpose: expected a matrix, got " + shape_to_string(a.shape()));
    }
    const NodeId ia = a.id();
    return a.graph().record("transpose", transposed(a.value()), {a},
                            [ia](Graph& g, const Tensor& go) { g.accumulate(ia, transposed(go)); });
}

Var add_rowwise(Var a, Var bias) {
    const Tensor& av = a.value();
    const Tensor& bv = bias.value();
    if (av.rank() != 2 || bv.numel() != av.dim(1)) {
        throw ShapeError("add_rowwise: bias " + shape_to_string(bv.shape()) +
                         " does not match rows of " + shape_to_string(av.shape()));
    }
    const std::size_t rows = av.dim(0);
    const std::size_t cols = av.dim(1);
    Tensor out = av;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out[r * cols + c] += bv[c];
        }
    }
    const NodeId ia = a.id();
    const NodeId ib = bias.id();
    return a.graph().record("add_rowwise", std::move(out), {a, bias},
                            [ia, ib, rows, cols](Graph& g, const Tensor& go) {
                                g.accumulate(ia, go);
                                if (g.requires_grad(ib)) {
                                    Tensor db(g.value(ib).shape(), 0.0);
                                    for (std::size_t r = 0; r < rows; ++r) {
                                        for (std::size_t c = 0; c < cols; ++c) {
                                            db[c] += go[r * cols + c];
                                        }
                                    }
                                    g.accumulate(ib, std::move(db));
                                }
                            });
}

Var tanh(Var a) {
    Tensor out = a.value();
    for (double& v : out.data()) {
        v = std::tanh(v);
    }
    const NodeId self = a.graph().size();
    const NodeId ia = a.id();
    return a.graph().record("tanh", std::move(out), {a}, [ia, self](Graph& g, const Tensor& go) {
        const Tensor& y = g.value(self);
        Tensor d = go;
        for (std::size_t i = 0; i < d.numel(); ++i) {
            d[i] *= 1.0 - y[i] * y[i];
        }
        g.accumulate(ia, std::move(d));
    });
}

Var reshape(Var a, Shape shape) {
    const NodeId ia = a.id();
    const Shape original = a.shape();
    return a.graph().record("reshape", a.value().reshaped(std::move(shape)), {a},
                            [ia, original](Graph& g, const Tensor& go) {
                                g.accumulate(ia, go.reshaped(original));
                            });
}

Var flatten_rows(Var a) {
    const Tensor& av = a.value();
    if (av.rank() == 2) {
        return a;
    }
    const std::size_t rows = av.dim(0);
    return reshape(a, {rows, av.numel() / rows});
}

Var repeat_rows(Var a, std::size_t times) {
    if (times == 0) {
        throw ShapeError("repeat_rows: times must be positive");
    }
    std::vector<std::size_t> indices;
    const std::size_t rows = a.value().dim(0);
    indices.reserve(rows * times);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t t = 0; t < times; ++t) {
            indices.push_back(r);
        }
    }
    return gather_rows(a, std::move(indices));
}

Var gather_rows(Var a, std::vector<std::size_t> indices) {
    const Tensor& av = a.value();
    if (indices.empty()) {
        throw ShapeError("gather_rows: no rows selected");
    }
    const std::size_t rows = av.dim(0);
    const std::size_t stride = av.numel() / rows;
    Shape shape = av.shape();
    shape[0] = indices.size();
    Tensor out(shape);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows) {
            throw ShapeError("gather_rows: index out of range");
        }
        std::copy_n(av.data().begin() + static_cast<std::ptrdiff_t>(indices[i] * stride), stride,
                    out.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    const NodeId ia = a.id();
    return a.graph().record("gather_rows", std::move(out), {a},
                            [ia, indices = std::move(indices), stride](Graph& g, const Tensor& go) {
                                Tensor d(g.value(ia).shape(), 0.0);
                                for (std::size_t i = 0; i < indices.size(); ++i) {
                                    for (std::size_t j = 0; j < stride; ++j) {
                                        d[indices[i] * stride + j] += go[i * stride + j];
                                    }
                                }
                                g.accumulate(ia, std::move(d));
                            });
}

Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().data()) {
        s += v;
    }
    const NodeId ia = a.id();
    return a.graph().record("sum", Tensor::scalar(s), {a}, [ia](Graph& g, const Tensor& go) {
        g.accumulate(ia, Tensor(g.value(ia).shape(), go[0]));
    });
}

Var sq_l2(Var a) {
    const NodeId ia = a.id();
    return a.graph().record("sq_l2", Tensor::scalar(sum_of_squares(a.value().data())), {a},
                            [ia](Graph& g, const Tensor& go) {
                                Tensor d = g.value(ia);
                                for (double& v : d.data()) {
                                    v *= 2.0 * go[0];
                                }
                                g.accumulate(ia, std::move(d));
                            });
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

} // namespace

Var l1_norm(Var a) {
    double s = 0.0;
    for (double v : a.value().data()) {
        s += std::abs(v);
    }
    const NodeId ia = a.id();
    return a.graph().record("l1_norm", Tensor::scalar(s), {a}, [ia](Graph& g, const Tensor& go) {
        Tensor d = g.value(ia);
        for (double& v : d.data()) {
            v = sign(v) * go[0];
        }
        g.accumulate(ia, std::move(d));
    });
}

Var l2_norm(Var a) {
    const double norm = std::sqrt(sum_of_squares(a.value().data()));
    const NodeId ia = a.id();
    return a.graph().record("l2_norm", Tensor::scalar(norm), {a},
                            [ia, norm](Graph& g, const Tensor& go) {
                                if (norm <= kNormEpsilon) {
                                    throw DegenerateError("l2_norm gradient at a near-zero vector");
                                }
                                Tensor d = g.value(ia);
                                for (double& v : d.data()) {
                                    v *= go[0] / norm;
                                }
                                g.accumulate(ia, std::move(d));
                            });
}

namespace {

void require_matrix(const char* op, const Tensor& t) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected [rows x cols], got " +
                         shape_to_string(t.shape()));
    }
}

} // namespace

Var row_l1_norm(Var a) {
    const Tensor& av = a.value();
    require_matrix("row_l1_norm", av);
    const std::size_t rows = av.dim(0);
    const std::size_t cols = av.dim(1);
    Tensor out({rows}, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out[r] += std::abs(av[r * cols + c]);
        }
    }
    const NodeId ia = a.id();
    return a.graph().record("row_l1_norm", std::move(out), {a},
                            [ia, cols](Graph& g, const Tensor& go) {
                                Tensor d = g.value(ia);
                                for (std::size_t i = 0; i < d.numel(); ++i) {
                                    d[i] = sign(d[i]) * go[i / cols];
                                }
                                g.accumulate(ia, std::move(d));
                            });
}

Var row_l2_norm(Var a) {
    const Tensor& av = a.value();
    require_matrix("row_l2_norm", av);
    const std::size_t rows = av.dim(0);
    const std::size_t cols = av.dim(1);
    Tensor out({rows}, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        out[r] = std::sqrt(sum_of_squares(av.data().subspan(r * cols, cols)));
    }
    const NodeId ia = a.id();
    const NodeId self = a.graph().size();
    return a.graph().record("row_l2_norm", std::move(out), {a},
                            [ia, self, cols](Graph& g, const Tensor& go) {
                                const Tensor& norms = g.value(self);
                                Tensor d = g.value(ia);
                                for (std::size_t i = 0; i < d.numel(); ++i) {
                                    const double n = norms[i / cols];
                                    if (n <= kNormEpsilon) {
                                        throw DegenerateError(
                                            "row_l2_norm gradient at a near-zero row " +
                                            std::to_string(i / cols));
                                    }
                                    d[i] *= go[i / cols] / n;
                                }
                                g.accumulate(ia, std::move(d));
                            });
}

} // namespace tiae::ad
