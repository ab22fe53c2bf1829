#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "taper/numerics/parameter.hpp"
#include "taper/numerics/tensor.hpp"

namespace taper {

class Graph;

/// Handle to a node recorded in a Graph. Cheap to copy; valid while the
/// graph is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Boolean mask with a shape; `true` marks entries to be filled with -inf.
struct Mask {
  Shape shape;
  std::vector<std::uint8_t> bits;

  /// T x T mask hiding positions j > i.
  static Mask causal(std::size_t t);
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
/// id order is a valid topological order for backward.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to `p`. Repeated calls for the same parameter return the same node.
  Var parameter(Parameter& p);

  /// Zeroes the gradient of every parameter bound to this graph, then
  /// accumulates d(loss)/d(param) into Parameter::grad.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Appends an op result. `inputs` decide whether the node needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);

  /// Gradient accumulator for node `id`, allocated on first use.
  Tensor& grad_of(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::size_t> param_nodes_;
};

// Differentiable kernels. All operands must belong to the same graph.
// Matrices are rank-2; vectors are 1 x n.

Var matmul(Var a, Var b);
/// Elementwise sum; `b` may also be a 1 x cols row broadcast over the rows of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product (same shapes).
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(Var a, std::size_t row_begin, std::size_t row_end, std::size_t col_begin, std::size_t col_end);
Var transpose(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
/// Row-wise softmax. -inf logits get probability 0; a row that is entirely
/// -inf is rejected.
Var softmax_rows(Var a);
/// Per-row normalization followed by elementwise gain and bias (both 1 x cols).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// axis 0: 1 x cols column means; axis 1: rows x 1 row means.
Var mean(Var a, std::size_t axis);
Var sum(Var a);
Var masked_fill(Var a, const Mask& mask);
/// Row r of the result is row r of `a` where `take_a[r]` is set, else row r of `b`.
Var where_rows(std::span<const std::uint8_t> take_a, Var a, Var b);
/// Sum over entries of -(y log p + (1 - y) log(1 - p)), with p clipped to
/// [eps, 1 - eps]. Clipped entries pass no gradient. Targets may be
/// fractional; optional `row_weights` scale each row's contribution.
Var binary_cross_entropy(Var probs, const Tensor& targets, double eps = 1e-7,
                         std::span<const double> row_weights = {});
/// Sum over rows of -log softmax(logits)[row, label].
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace taper
