#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "clseg/tensor.hpp"

namespace clseg {

enum class OpKind {
    parameter,
    constant,
    conv2d,
    relu,
    maxpool2x2,
    upsample2x2_nearest,
    add,
    matmul,
    softmax_channel,
    cross_entropy_loss,
    l2_squared_norm,
    scale,
    sum,
    dropout,
};

std::string_view op_name(OpKind kind);

/// Handle to a node in a Graph. Only meaningful for the graph that issued it.
struct Var {
    std::size_t id = 0;
};

/// Tape of recorded operations for one forward pass.
///
/// Nodes are stored in insertion order, so every node's inputs precede it.
/// `backward` walks the tape in exact reverse order and is allowed once;
/// afterwards the backward closures are released. Parameter leaves write
/// their gradient into the bound Tensor's grad buffer, accumulating across
/// uses and across graphs until the caller zeroes it. Bound tensors must
/// outlive the graph.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, Var self)>;

    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    /// Leaf bound to an external tensor; differentiable iff the tensor
    /// requires grad and this graph has grad enabled.
    Var parameter(Tensor& tensor);
    /// Read-only leaf: the value is copied and never differentiated.
    Var parameter(const Tensor& tensor);
    Var constant(Tensor value);

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    OpKind kind(Var v) const { return nodes_.at(v.id).kind; }
    const std::vector<std::size_t>& inputs(Var v) const { return nodes_.at(v.id).inputs; }
    std::size_t size() const noexcept { return nodes_.size(); }
    bool grad_enabled() const noexcept { return grad_enabled_; }

    void backward(Var loss);

    /// Appends a node. The closure is dropped when no input requires grad.
    Var record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward);

    /// Upstream gradient of a node during backward (empty if never reached).
    std::span<const double> grad(Var v) const { return nodes_.at(v.id).grad; }
    /// Gradient slot of an input node, zero-initialized on first access.
    std::span<double> grad_slot(Var v);

private:
    struct Node {
        OpKind kind;
        std::vector<std::size_t> inputs;
        Tensor value;
        std::vector<double> grad;
        BackwardFn backward;
        Tensor* bound = nullptr;
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;
    bool grad_enabled_ = true;
    bool consumed_ = false;
};

namespace ops {

/// Same-padded, stride-1 convolution. input [N,Cin,H,W], kernel [Cout,Cin,kh,kw]
/// with odd kh, kw, bias [Cout].
Var conv2d(Graph& g, Var input, Var kernel, std::optional<Var> bias = std::nullopt);

Var relu(Graph& g, Var x);

/// 2x2 max pooling, stride 2. Ties go to the first element in row-major order.
Var maxpool2x2(Graph& g, Var x);

Var upsample2x2_nearest(Graph& g, Var x);
Var add(Graph& g, Var a, Var b);

/// [M,K] x [K,N] -> [M,N].
Var matmul(Graph& g, Var a, Var b);

/// Softmax over axis 1 of a rank-4 tensor.
Var softmax_channel(Graph& g, Var logits);

/// Mean over pixels of -log p[label]. `probs` is [N,C,H,W], labels hold N*H*W
/// class indices in NHW order.
Var cross_entropy_loss(Graph& g, Var probs, std::span<const int> labels);

Var l2_squared_norm(Graph& g, Var x);
Var scale(Graph& g, Var x, double factor);
Var sum(Graph& g, Var x);

/// Inverted dropout. Returns `x` unchanged (and draws nothing) when rate is 0.
Var dropout(Graph& g, Var x, double rate, std::mt19937_64& rng);

} // namespace ops
} // namespace clseg
