#include "taper/numerics/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace taper {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_graph(std::initializer_list<Var> vars, const char* op) {
  Graph* g = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw std::invalid_argument(std::string(op) + ": operand is not attached to a graph");
    if (g && v.graph() != g) throw std::invalid_argument(std::string(op) + ": operands belong to different graphs");
    g = v.graph();
  }
}

void require_no_nan(const Var& v, const char* op) {
  if (v.value().has_nan()) throw std::invalid_argument(std::string(op) + ": NaN in input " + shape_string(v.shape()));
}

void require_rank2(const Var& v, const char* op) {
  if (v.shape().size() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected a matrix, got " + shape_string(v.shape()));
  }
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

void check_binary(Var a, Var b, const char* op) {
  require_graph({a, b}, op);
  require_rank2(a, op);
  require_rank2(b, op);
  require_no_nan(a, op);
  require_no_nan(b, op);
}

void check_unary(Var a, const char* op) {
  require_graph({a}, op);
  require_rank2(a, op);
  require_no_nan(a, op);
}

}  // namespace

const Tensor& Var::value() const {
  if (!graph_) throw std::logic_error("Var is not attached to a graph");
  return graph_->value(id_);
}

Mask Mask::causal(std::size_t t) {
  Mask m{{t, t}, std::vector<std::uint8_t>(t * t, 0)};
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = i + 1; j < t; ++j) m.bits[i * t + j] = 1;
  return m;
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, {}, {}, &p, true});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Graph::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || nodes_[v.id()].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_of(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Graph::backward(Var loss) {
  if (!loss.valid() || nodes_.empty()) throw std::logic_error("backward called before forward");
  if (loss.graph() != this || loss.id() >= nodes_.size()) throw std::logic_error("backward: loss is not recorded in this graph");
  if (nodes_[loss.id()].value.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_string(nodes_[loss.id()].value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  grad_of(loss.id()).fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
  for (auto& [param, id] : param_nodes_) {
    param->grad = Tensor(param->value.shape());
    const Tensor& g = nodes_[id].grad;
    if (!g.empty()) param->grad = g;
  }
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  check_binary(a, b, "matmul");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
  if (B.rows() != k) shape_mismatch("matmul", A.shape(), B.shape());
  Tensor C({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double* c = &C.data()[i * m];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A.data()[i * k + p];
      if (av == 0.0) continue;
      const double* br = &B.data()[p * m];
      for (std::size_t j = 0; j < m; ++j) c[j] += av * br[j];
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->record(std::move(C), {a, b}, [ia, ib, n, k, m](Graph& g, const Tensor& dC) {
    const Tensor& A = g.value(ia);
    const Tensor& B = g.value(ib);
    if (g.requires_grad(ia)) {
      Tensor& dA = g.grad_of(ia);
      for (std::size_t i = 0; i < n; ++i) {
        const double* dc = &dC.data()[i * m];
        for (std::size_t p = 0; p < k; ++p) {
          const double* br = &B.data()[p * m];
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += dc[j] * br[j];
          dA.data()[i * k + p] += s;
        }
      }
    }
    if (g.requires_grad(ib)) {
      Tensor& dB = g.grad_of(ib);
      for (std::size_t i = 0; i < n; ++i) {
        const double* dc = &dC.data()[i * m];
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A.data()[i * k + p];
          if (av == 0.0) continue;
          double* db = &dB.data()[p * m];
          for (std::size_t j = 0; j < m; ++j) db[j] += av * dc[j];
        }
      }
    }
  });
}

Var add(Var a, Var b) {
  check_binary(a, b, "add");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const bool broadcast = A.shape() != B.shape();
  if (broadcast && !(B.rows() == 1 && B.cols() == A.cols())) shape_mismatch("add", A.shape(), B.shape());
  Tensor C = A;
  const std::size_t cols = A.cols();
  for (std::size_t i = 0; i < C.size(); ++i) C[i] += broadcast ? B[i % cols] : B[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->record(std::move(C), {a, b}, [ia, ib, broadcast, cols](Graph& g, const Tensor& dC) {
    if (g.requires_grad(ia)) {
      Tensor& dA = g.grad_of(ia);
      for (std::size_t i = 0; i < dC.size(); ++i) dA[i] += dC[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& dB = g.grad_of(ib);
      for (std::size_t i = 0; i < dC.size(); ++i) dB[broadcast ? i % cols : i] += dC[i];
    }
  });
}

Var sub(Var a, Var b) {
  check_binary(a, b, "sub");
  if (a.shape() != b.shape()) shape_mismatch("sub", a.shape(), b.shape());
  Tensor C = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < C.size(); ++i) C[i] -= B[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->record(std::move(C), {a, b}, [ia, ib](Graph& g, const Tensor& dC) {
    if (g.requires_grad(ia)) {
      Tensor& dA = g.grad_of(ia);
      for (std::size_t i = 0; i < dC.size(); ++i) dA[i] += dC[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& dB = g.grad_of(ib);
      for (std::size_t i = 0; i < dC.size(); ++i) dB[i] -= dC[i];
    }
  });
}

Var mul(Var a, Var b) {
  check_binary(a, b, "mul");
  if (a.shape() != b.shape()) shape_mismatch("mul", a.shape(), b.shape());
  Tensor C = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= B[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->record(std::move(C), {a, b}, [ia, ib](Graph& g, const Tensor& dC) {
    const Tensor& A = g.value(ia);
    const Tensor& B = g.value(ib);
    if (g.requires_grad(ia)) {
      Tensor& dA = g.grad_of(ia);
      for (std::size_t i = 0; i < dC.size(); ++i) dA[i] += dC[i] * B[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& dB = g.grad_of(ib);
      for (std::size_t i = 0; i < dC.size(); ++i) dB[i] += dC[i] * A[i];
    }
  });
}

Var scale(Var a, double s) {
  check_unary(a, "scale");
  Tensor C = a.value();
  for (double& v : C.data()) v *= s;
  const std::size_t ia = a.id();
  return a.graph()->record(std::move(C), {a}, [ia, s](Graph& g, const Tensor& dC) {
    Tensor& dA = g.grad_of(ia);
    for (std::size_t i = 0; i < dC.size(); ++i) dA[i] += s * dC[i];
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no operands");
  if (axis > 1) throw std::invalid_argument("concat: axis must be 0 or 1");
  for (const Var& v : parts) {
    require_graph({parts.front(), v}, "concat");
    require_rank2(v, "concat");
    require_no_nan(v, "concat");
  }
  const Shape& s0 = parts.front().shape();
  std::size_t total = 0;
  for (const Var& v : parts) {
    if (axis == 0 && v.cols() != s0[1]) shape_mismatch("concat", s0, v.shape());
    if (axis == 1 && v.rows() != s0[0]) shape_mismatch("concat", s0, v.shape());
    total += axis == 0 ? v.rows() : v.cols();
  }
  const std::size_t rows = axis == 0 ? total : s0[0];
  const std::size_t cols = axis == 0 ? s0[1] : total;
  Tensor C({rows, cols});
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& v : parts) {
    const Tensor& P = v.value();
    for (std::size_t r = 0; r < P.rows(); ++r)
      for (std::size_t c = 0; c < P.cols(); ++c) {
        if (axis == 0) C(off + r, c) = P(r, c);
        else C(r, off + c) = P(r, c);
      }
    ids.push_back(v.id());
    offsets.push_back(off);
    off += axis == 0 ? P.rows() : P.cols();
  }
  return parts.front().graph()->record(std::move(C), parts, [ids, offsets, axis](Graph& g, const Tensor& dC) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!g.requires_grad(ids[k])) continue;
      Tensor& dP = g.grad_of(ids[k]);
      for (std::size_t r = 0; r < dP.rows(); ++r)
        for (std::size_t c = 0; c < dP.cols(); ++c)
          dP(r, c) += axis == 0 ? dC(offsets[k] + r, c) : dC(r, offsets[k] + c);
    }
  });
}

Var slice(Var a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  check_unary(a, "slice");
  if (r0 > r1 || r1 > a.rows() || c0 > c1 || c1 > a.cols()) {
    throw std::invalid_argument("slice: range [" + std::to_string(r0) + "," + std::to_string(r1) + ")x[" +
                                std::to_string(c0) + "," + std::to_string(c1) + ") outside " + shape_string(a.shape()));
  }
  const Tensor& A = a.value();
  Tensor C({r1 - r0, c1 - c0});
  for (std::size_t r = r0; r < r1; ++r)
    for (std::size_t c = c0; c < c1; ++c) C(r - r0, c - c0) = A(r, c);
  const std::size_t ia = a.id();
  return a.graph()->record(std::move(C), {a}, [ia, r0, c0](Graph& g, const Tensor& dC) {
    Tensor& dA = g.grad_of(ia);
    for (std::size_t r = 0; r < dC.rows(); ++r)
      for (std::size_t c = 0; c < dC.cols(); ++c) dA(r0 + r, c0 + c) += dC(r, c);
  });
}

Var transpose(Var a) {
  check_unary(a, "transpose");
  const Tensor& A = a.value();
  Tensor C({A.cols(), A.rows()});
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = 0; c < A.cols(); ++c) C(c, r) = A(r, c);
  const std::size_t ia = a.id();
  return a.graph()->record(std::move(C), {a}, [ia](Graph& g, const Tensor& dC) {
    Tensor& dA = g.grad_of(ia);
    for (std::size_t r = 0; r < dC.rows(); ++r)
      for (std::size_t c = 0; c < dC.cols(); ++c) dA(c, r) += dC(r, c);
  });
}

namespace {

// Elementwise op whose derivative is a function of the output value.
template <class F, class DF>
Var pointwise(Var a, const char* op, F f, DF df_from_out) {
  check_unary(a, op);
  Tensor C = a.value();
  for (double& v : C.data()) v = f(v);
  const std::size_t ia = a.id();
  const std::size_t out_id = a.graph()->size();
  return a.graph()->record(std::move(C), {a}, [ia, out_id, df_from_out](Graph& g, const Tensor& dC) {
    const Tensor& Y = g.value(out_id);
    Tensor& dA = g.grad_of(ia);
    for (std::size_t i = 0; i < dC.size(); ++i) dA[i] += dC[i] * df_from_out(Y[i]);
  });
}

}  // namespace

Var sigmoid(Var a) {
  return pointwise(
      a, "sigmoid",
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return pointwise(a, "tanh", [](double x) { return std::tanh(x); }, [](double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return pointwise(a, "relu", [](double x) { return x > 0 ? x : 0.0; }, [](double y) { return y > 0 ? 1.0 : 0.0; });
}

Var softmax_rows(Var a) {
  check_unary(a, "softmax_rows");
  const Tensor& A = a.value();
  const std::size_t rows = A.rows(), cols = A.cols();
  Tensor Y({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = kNegInf;
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, A(r, c));
    if (mx == kNegInf) throw std::invalid_argument("softmax_rows: row " + std::to_string(r) + " is fully masked");
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double e = A(r, c) == kNegInf ? 0.0 : std::exp(A(r, c) - mx);
      Y(r, c) = e;
      z += e;
    }
    for (std::size_t c = 0; c < cols; ++c) Y(r, c) /= z;
  }
  const std::size_t ia = a.id();
  const std::size_t out_id = a.graph()->size();
  return a.graph()->record(std::move(Y), {a}, [ia, out_id, rows, cols](Graph& g, const Tensor& dY) {
    const Tensor& Y = g.value(out_id);
    Tensor& dA = g.grad_of(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += dY(r, c) * Y(r, c);
      for (std::size_t c = 0; c < cols; ++c) dA(r, c) += Y(r, c) * (dY(r, c) - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  check_unary(x, "layer_norm");
  require_graph({x, gain, bias}, "layer_norm");
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gain.rows() != 1 || gain.cols() != cols) shape_mismatch("layer_norm", x.shape(), gain.shape());
  if (bias.rows() != 1 || bias.cols() != cols) shape_mismatch("layer_norm", x.shape(), bias.shape());
  const Tensor& X = x.value();
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  Tensor Y({rows, cols});
  Tensor xhat({rows, cols});
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += X(r, c);
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (X(r, c) - mu) * (X(r, c) - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      xhat(r, c) = (X(r, c) - mu) * inv_std[r];
      Y(r, c) = G[c] * xhat(r, c) + B[c];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.graph()->record(
      std::move(Y), {x, gain, bias},
      [ix, ig, ib, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, const Tensor& dY) {
        const Tensor& G = g.value(ig);
        if (g.requires_grad(ig)) {
          Tensor& dG = g.grad_of(ig);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) dG[c] += dY(r, c) * xhat(r, c);
        }
        if (g.requires_grad(ib)) {
          Tensor& dB = g.grad_of(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) dB[c] += dY(r, c);
        }
        if (g.requires_grad(ix)) {
          Tensor& dX = g.grad_of(ix);
          const double n = static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = dY(r, c) * G[c];
              mean_d += d;
              mean_dx += d * xhat(r, c);
            }
            mean_d /= n;
            mean_dx /= n;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = dY(r, c) * G[c];
              dX(r, c) += inv_std[r] * (d - mean_d - xhat(r, c) * mean_dx);
            }
          }
        }
      });
}

Var mean(Var a, std::size_t axis) {
  check_unary(a, "mean");
  if (axis > 1) throw std::invalid_argument("mean: axis must be 0 or 1");
  const Tensor& A = a.value();
  const std::size_t rows = A.rows(), cols = A.cols();
  if (rows == 0 || cols == 0) throw std::invalid_argument("mean: empty operand " + shape_string(A.shape()));
  Tensor C = axis == 0 ? Tensor({1, cols}) : Tensor({rows, 1});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) C[axis == 0 ? c : r] += A(r, c);
  const double n = static_cast<double>(axis == 0 ? rows : cols);
  for (double& v : C.data()) v /= n;
  const std::size_t ia = a.id();
  return a.graph()->record(std::move(C), {a}, [ia, axis, n](Graph& g, const Tensor& dC) {
    Tensor& dA = g.grad_of(ia);
    for (std::size_t r = 0; r < dA.rows(); ++r)
      for (std::size_t c = 0; c < dA.cols(); ++c) dA(r, c) += dC[axis == 0 ? c : r] / n;
  });
}

Var sum(Var a) {
  check_unary(a, "sum");
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.graph()->record(Tensor::scalar(s), {a}, [ia](Graph& g, const Tensor& dC) {
    Tensor& dA = g.grad_of(ia);
    for (double& v : dA.data()) v += dC[0];
  });
}

Var masked_fill(Var a, const Mask& mask) {
  check_unary(a, "masked_fill");
  if (mask.shape != a.shape() || mask.bits.size() != a.value().size()) shape_mismatch("masked_fill", a.shape(), mask.shape);
  Tensor C = a.value();
  for (std::size_t i = 0; i < C.size(); ++i)
    if (mask.bits[i]) C[i] = kNegInf;
  const std::size_t ia = a.id();
  return a.graph()->record(std::move(C), {a}, [ia, bits = mask.bits](Graph& g, const Tensor& dC) {
    Tensor& dA = g.grad_of(ia);
    for (std::size_t i = 0; i < dC.size(); ++i)
      if (!bits[i]) dA[i] += dC[i];
  });
}

Var where_rows(std::span<const std::uint8_t> take_a, Var a, Var b) {
  check_binary(a, b, "where_rows");
  if (a.shape() != b.shape()) shape_mismatch("where_rows", a.shape(), b.shape());
  if (take_a.size() != a.rows()) {
    throw std::invalid_argument("where_rows: " + std::to_string(take_a.size()) + " flags for " + shape_string(a.shape()));
  }
  Tensor C = b.value();
  const std::size_t cols = C.cols();
  const Tensor& A = a.value();
  for (std::size_t r = 0; r < C.rows(); ++r)
    if (take_a[r]) std::copy(A.data().begin() + r * cols, A.data().begin() + (r + 1) * cols, C.data().begin() + r * cols);
  std::vector<std::uint8_t> flags(take_a.begin(), take_a.end());
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->record(std::move(C), {a, b}, [ia, ib, cols, flags = std::move(flags)](Graph& g, const Tensor& dC) {
    for (std::size_t r = 0; r < flags.size(); ++r) {
      const std::size_t id = flags[r] ? ia : ib;
      if (!g.requires_grad(id)) continue;
      Tensor& d = g.grad_of(id);
      for (std::size_t c = 0; c < cols; ++c) d.data()[r * cols + c] += dC.data()[r * cols + c];
    }
  });
}

Var binary_cross_entropy(Var probs, const Tensor& targets, double eps, std::span<const double> row_weights) {
  check_unary(probs, "binary_cross_entropy");
  if (probs.shape() != targets.shape()) shape_mismatch("binary_cross_entropy", probs.shape(), targets.shape());
  const Tensor& P = probs.value();
  const std::size_t cols = P.cols();
  if (!row_weights.empty() && row_weights.size() != P.rows()) {
    throw std::invalid_argument("binary_cross_entropy: " + std::to_string(row_weights.size()) + " row weights for " +
                                shape_string(P.shape()));
  }
  std::vector<double> weights(row_weights.begin(), row_weights.end());
  if (weights.empty()) weights.assign(P.rows(), 1.0);
  double loss = 0.0;
  for (std::size_t r = 0; r < P.rows(); ++r) {
    if (weights[r] == 0.0) continue;
    double row = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = std::clamp(P(r, c), eps, 1.0 - eps);
      const double y = targets(r, c);
      row -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    loss += weights[r] * row;
  }
  const std::size_t ip = probs.id();
  return probs.graph()->record(Tensor::scalar(loss), {probs}, [ip, targets, eps, weights = std::move(weights)](Graph& g, const Tensor& dC) {
    const Tensor& P = g.value(ip);
    Tensor& dP = g.grad_of(ip);
    const std::size_t cols = P.cols();
    for (std::size_t r = 0; r < P.rows(); ++r) {
      if (weights[r] == 0.0) continue;
      const double scale = dC[0] * weights[r];
      for (std::size_t c = 0; c < cols; ++c) {
        const double p = P(r, c);
        if (p < eps || p > 1.0 - eps) continue;
        const double y = targets(r, c);
        dP(r, c) += scale * (-y / p + (1.0 - y) / (1.0 - p));
      }
    }
  });
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
  check_unary(logits, "softmax_cross_entropy");
  const Tensor& L = logits.value();
  const std::size_t rows = L.rows(), cols = L.cols();
  if (labels.size() != rows) {
    throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                shape_string(L.shape()) + " logits");
  }
  Tensor probs({rows, cols});
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= cols) throw std::invalid_argument("softmax_cross_entropy: label out of range");
    double mx = L(r, 0);
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, L(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(L(r, c) - mx);
    for (std::size_t c = 0; c < cols; ++c) probs(r, c) = std::exp(L(r, c) - mx) / z;
    loss -= L(r, labels[r]) - mx - std::log(z);
  }
  const std::size_t il = logits.id();
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return logits.graph()->record(
      Tensor::scalar(loss), {logits}, [il, probs = std::move(probs), lab = std::move(lab)](Graph& g, const Tensor& dC) {
        Tensor& dL = g.grad_of(il);
        for (std::size_t r = 0; r < probs.rows(); ++r)
          for (std::size_t c = 0; c < probs.cols(); ++c)
            dL(r, c) += dC[0] * (probs(r, c) - (c == lab[r] ? 1.0 : 0.0));
      });
}

}  // namespace taper
