#pragma once

// Reverse-mode differentiation over a graph that is rebuilt for every
// evaluation. Nodes are appended in creation order, so an op's inputs always
// have smaller ids than the op itself and reverse id order is a valid
// reverse topological order.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tiae/tensor.hpp"

namespace tiae::ad {

class Graph;

using NodeId = std::size_t;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
public:
    Var() = default;
    Var(Graph* graph, NodeId id) : graph_(graph), id_(id) {}

    Graph& graph() const { return *graph_; }
    NodeId id() const noexcept { return id_; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }

private:
    Graph* graph_ = nullptr;
    NodeId id_ = 0;
};

/// Propagates `grad_out` (gradient w.r.t. the node output) into the node's
/// inputs through Graph::accumulate.
using BackwardFn = std::function<void(Graph& graph, const Tensor& grad_out)>;

class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Leaf node. Gradients are only tracked for leaves with requires_grad.
    Var leaf(Tensor value, bool requires_grad = true);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    /// Records an op node. `value` must be finite; the node requires a
    /// gradient iff one of its inputs does, and only then is `backward` kept.
    Var record(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

    /// Accumulates gradients of the scalar `root` into every node it depends on.
    void backward(Var root);

    /// Gradient accumulated at `v` by the last backward(); zeros when `v` was
    /// not reached.
    Tensor grad(Var v) const;
    bool has_grad(Var v) const { return grads_.at(v.id()).has_value(); }

    void zero_grad();

    bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
    void accumulate(NodeId id, const Tensor& delta);
    void accumulate(NodeId id, Tensor&& delta);

    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
    const std::string& op_name(NodeId id) const { return nodes_.at(id).op; }
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        std::string op;
        Tensor value;
        std::vector<NodeId> inputs;
        BackwardFn backward;
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;
    std::vector<std::optional<Tensor>> grads_;
};

// Elementwise arithmetic. Operands must have identical shapes, or one of
// them must hold a single element (scalar broadcast).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

/// [m x k] * [k x n] -> [m x n].
Var matmul(Var a, Var b);
Var transpose(Var a);
/// Adds `bias` [n] to every row of a [m x n] matrix.
Var add_rowwise(Var a, Var bias);

Var tanh(Var a);

Var reshape(Var a, Shape shape);
/// Flattens every axis after the first: [b x ...] -> [b x rest].
Var flatten_rows(Var a);
/// Repeats each row (slice along axis 0) `times` times consecutively.
Var repeat_rows(Var a, std::size_t times);
/// Selects rows along axis 0; indices may repeat.
Var gather_rows(Var a, std::vector<std::size_t> indices);

Var sum(Var a);
/// Sum of squared entries.
Var sq_l2(Var a);
Var l1_norm(Var a);
/// Euclidean norm. Its gradient is undefined at the origin: backward throws
/// DegenerateError when the norm is <= kNormEpsilon.
Var l2_norm(Var a);
/// Per-row norms of a [b x d] matrix, result shape [b].
Var row_l1_norm(Var a);
Var row_l2_norm(Var a);

inline constexpr double kNormEpsilon = 1e-12;

} // namespace tiae::ad
