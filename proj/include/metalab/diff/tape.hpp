#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "metalab/diff/tensor.hpp"

namespace metalab::diff {

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  AddScalar,
  Square,
  Sqrt,
  Exp,
  Log,
  Relu,
  Sigmoid,
  MatMul,
  BroadcastRows,
  SumRows,
  BroadcastCols,
  SumCols,
  BroadcastScalar,
  Sum,
  Reshape,
  LogSoftmax,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Square: return "square";
    case Op::Sqrt: return "sqrt";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::MatMul: return "matmul";
    case Op::BroadcastRows: return "broadcast_rows";
    case Op::SumRows: return "sum_rows";
    case Op::BroadcastCols: return "broadcast_cols";
    case Op::SumCols: return "sum_cols";
    case Op::BroadcastScalar: return "broadcast_scalar";
    case Op::Sum: return "sum";
    case Op::Reshape: return "reshape";
    case Op::LogSoftmax: return "log_softmax";
  }
  return "?";
}

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; does not own the value.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }

  inline const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Append-only record of primitive operations. Nodes are stored in creation
/// order, so every input id precedes its consumer and a reverse sweep is a
/// valid topological order. Gradients are themselves expressed as recorded
/// primitives, which is what makes gradients of gradients available.
class Tape {
 public:
  struct Node {
    Op op = Op::Leaf;
    int a = -1;
    int b = -1;
    double c = 0.0;
    std::uint8_t flags = 0;  // Leaf: 1 = variable. MatMul: bit0 = transpose a, bit1 = transpose b.
    Tensor value;
  };

  struct Checkpoint {
    std::size_t position;
    std::string label;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Tensor t) { return leaf(std::move(t), true, "variable"); }
  Var constant(Tensor t) { return leaf(std::move(t), false, "constant"); }
  Var constant(double v) { return constant(Tensor::scalar(v)); }

  /// Same value, no history: gradients do not flow through the result.
  Var stop_gradient(Var x) { return constant(owned(x).value); }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  const Tensor& value(Var v) const { return owned(v).value; }
  bool is_variable(Var v) const { return owned(v).op == Op::Leaf && (owned(v).flags & 1); }
  bool owns(Var v) const { return v.tape() == this && v.id() >= 0 && static_cast<std::size_t>(v.id()) < nodes_.size(); }

  /// Marks an inner-update boundary.
  std::size_t checkpoint(std::string label = {}) {
    checkpoints_.push_back({nodes_.size(), std::move(label)});
    return checkpoints_.size() - 1;
  }
  const std::vector<Checkpoint>& checkpoints() const { return checkpoints_; }

  void clear() {
    nodes_.clear();
    checkpoints_.clear();
  }

  /// Numeric gradients of scalar `y` w.r.t. `wrt`. The tape is left as it was.
  std::vector<Tensor> gradients(Var y, std::span<const Var> wrt) {
    const std::size_t mark = nodes_.size();
    auto gs = backward(y, wrt);
    std::vector<Tensor> out;
    out.reserve(gs.size());
    for (const auto& g : gs) out.push_back(nodes_[static_cast<std::size_t>(g.id())].value);
    nodes_.resize(mark);
    return out;
  }

  /// Gradients recorded on the tape so they can be differentiated again.
  std::vector<Var> gradients_graph(Var y, std::span<const Var> wrt) { return backward(y, wrt); }

  Var push(Op op, int a, int b, double c, std::uint8_t flags, Tensor value) {
    if (!value.all_finite()) throw NumericFault(std::string("non-finite output of ") + op_name(op));
    nodes_.push_back(Node{op, a, b, c, flags, std::move(value)});
    return Var(this, static_cast<int>(nodes_.size() - 1));
  }

  const Node& owned(Var v) const {
    if (!owns(v)) throw StructuralError("variable is not recorded on this tape");
    return nodes_[static_cast<std::size_t>(v.id())];
  }

 private:
  Var leaf(Tensor t, bool variable, const char* what) {
    if (!t.all_finite()) throw NumericFault(std::string("non-finite ") + what);
    nodes_.push_back(Node{Op::Leaf, -1, -1, 0.0, static_cast<std::uint8_t>(variable ? 1 : 0), std::move(t)});
    return Var(this, static_cast<int>(nodes_.size() - 1));
  }

  inline std::vector<Var> backward(Var y, std::span<const Var> wrt);
  inline std::array<Var, 2> vjp(int id, Var g, bool need_a, bool need_b);

  std::vector<Node> nodes_;
  std::vector<Checkpoint> checkpoints_;
};

inline const Tensor& Var::value() const {
  if (!tape_) throw StructuralError("value() of an unbound Var");
  return tape_->value(*this);
}

// ---------------------------------------------------------------------------
// Primitive operations.

namespace detail {
inline Tape& tape_of(Var a) {
  if (!a.valid()) throw StructuralError("operation on an unbound Var");
  return *a.tape();
}
inline Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw StructuralError("operands live on different tapes");
  return tape_of(a);
}
}  // namespace detail

inline Var operator+(Var a, Var b) {
  auto& t = detail::tape_of(a, b);
  return t.push(Op::Add, a.id(), b.id(), 0, 0, kernels::zip(a.value(), b.value(), std::plus<>(), "add"));
}
inline Var operator-(Var a, Var b) {
  auto& t = detail::tape_of(a, b);
  return t.push(Op::Sub, a.id(), b.id(), 0, 0, kernels::zip(a.value(), b.value(), std::minus<>(), "sub"));
}
inline Var operator*(Var a, Var b) {
  auto& t = detail::tape_of(a, b);
  return t.push(Op::Mul, a.id(), b.id(), 0, 0, kernels::zip(a.value(), b.value(), std::multiplies<>(), "mul"));
}
inline Var operator/(Var a, Var b) {
  auto& t = detail::tape_of(a, b);
  return t.push(Op::Div, a.id(), b.id(), 0, 0, kernels::zip(a.value(), b.value(), std::divides<>(), "div"));
}
inline Var operator-(Var a) {
  return detail::tape_of(a).push(Op::Neg, a.id(), -1, 0, 0, kernels::map(a.value(), [](double v) { return -v; }));
}
inline Var scale(Var a, double c) {
  return detail::tape_of(a).push(Op::Scale, a.id(), -1, c, 0, kernels::map(a.value(), [c](double v) { return c * v; }));
}
inline Var add_scalar(Var a, double c) {
  return detail::tape_of(a).push(Op::AddScalar, a.id(), -1, c, 0,
                                 kernels::map(a.value(), [c](double v) { return v + c; }));
}
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator+(Var a, double c) { return add_scalar(a, c); }
inline Var operator-(Var a, double c) { return add_scalar(a, -c); }

inline Var square(Var a) {
  return detail::tape_of(a).push(Op::Square, a.id(), -1, 0, 0, kernels::map(a.value(), [](double v) { return v * v; }));
}
inline Var sqrt(Var a) {
  return detail::tape_of(a).push(Op::Sqrt, a.id(), -1, 0, 0,
                                 kernels::map(a.value(), [](double v) { return std::sqrt(v); }));
}
inline Var exp(Var a) {
  return detail::tape_of(a).push(Op::Exp, a.id(), -1, 0, 0, kernels::map(a.value(), [](double v) { return std::exp(v); }));
}
inline Var log(Var a) {
  return detail::tape_of(a).push(Op::Log, a.id(), -1, 0, 0, kernels::map(a.value(), [](double v) { return std::log(v); }));
}
inline Var relu(Var a) {
  return detail::tape_of(a).push(Op::Relu, a.id(), -1, 0, 0,
                                 kernels::map(a.value(), [](double v) { return v > 0.0 ? v : 0.0; }));
}
inline Var sigmoid(Var a) {
  return detail::tape_of(a).push(Op::Sigmoid, a.id(), -1, 0, 0, kernels::map(a.value(), [](double v) {
                                   return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
                                 }));
}
inline Var matmul(Var a, Var b, bool ta = false, bool tb = false) {
  auto& t = detail::tape_of(a, b);
  const auto flags = static_cast<std::uint8_t>((ta ? 1 : 0) | (tb ? 2 : 0));
  return t.push(Op::MatMul, a.id(), b.id(), 0, flags, kernels::matmul(a.value(), b.value(), ta, tb));
}

/// [n] -> [rows, n], every row a copy of the vector.
inline Var broadcast_rows(Var v, std::size_t rows) {
  const auto& x = v.value();
  if (x.rank() != 1) throw StructuralError("broadcast_rows expects rank 1, got " + shape_str(x.shape()));
  Tensor y(Shape{rows, x.size()});
  for (std::size_t i = 0; i < rows; ++i) std::copy(x.values().begin(), x.values().end(), y.values().begin() + i * x.size());
  return detail::tape_of(v).push(Op::BroadcastRows, v.id(), -1, 0, 0, std::move(y));
}
/// [rows, n] -> [n], summing over rows.
inline Var sum_rows(Var m) {
  const auto& x = m.value();
  if (x.rank() != 2) throw StructuralError("sum_rows expects rank 2, got " + shape_str(x.shape()));
  Tensor y(Shape{x.cols()});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) y[j] += x.at(i, j);
  return detail::tape_of(m).push(Op::SumRows, m.id(), -1, 0, 0, std::move(y));
}
/// [rows] -> [rows, n], every column a copy of the vector.
inline Var broadcast_cols(Var v, std::size_t cols) {
  const auto& x = v.value();
  if (x.rank() != 1) throw StructuralError("broadcast_cols expects rank 1, got " + shape_str(x.shape()));
  Tensor y(Shape{x.size(), cols});
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) y.at(i, j) = x[i];
  return detail::tape_of(v).push(Op::BroadcastCols, v.id(), -1, static_cast<double>(cols), 0, std::move(y));
}
/// [rows, n] -> [rows], summing over columns.
inline Var sum_cols(Var m) {
  const auto& x = m.value();
  if (x.rank() != 2) throw StructuralError("sum_cols expects rank 2, got " + shape_str(x.shape()));
  Tensor y(Shape{x.rows()});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) y[i] += x.at(i, j);
  return detail::tape_of(m).push(Op::SumCols, m.id(), -1, 0, 0, std::move(y));
}
/// Scalar -> tensor of the given shape.
inline Var broadcast_scalar(Var s, const Shape& shape) {
  if (s.value().rank() != 0) throw StructuralError("broadcast_scalar expects a scalar, got " + shape_str(s.shape()));
  return detail::tape_of(s).push(Op::BroadcastScalar, s.id(), -1, 0, 0, Tensor(shape, s.value().item()));
}
inline Var sum(Var a) {
  double s = 0;
  for (double v : a.value().values()) s += v;
  return detail::tape_of(a).push(Op::Sum, a.id(), -1, 0, 0, Tensor::scalar(s));
}
inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }
inline Var reshape(Var a, Shape shape) {
  return detail::tape_of(a).push(Op::Reshape, a.id(), -1, 0, 0, a.value().reshaped(std::move(shape)));
}
/// Row-wise log-softmax of a rank-2 tensor.
inline Var log_softmax(Var a) {
  return detail::tape_of(a).push(Op::LogSoftmax, a.id(), -1, 0, 0, kernels::log_softmax_rows(a.value()));
}
inline Var softmax(Var a) { return exp(log_softmax(a)); }

// ---------------------------------------------------------------------------
// Reverse sweep.

inline std::array<Var, 2> Tape::vjp(int id, Var g, bool need_a, bool need_b) {
  // Copy what is needed: pushes below may reallocate nodes_.
  const Op op = nodes_[id].op;
  const int ia = nodes_[id].a, ib = nodes_[id].b;
  const double c = nodes_[id].c;
  const std::uint8_t flags = nodes_[id].flags;
  const Var a(this, ia), b(this, ib), y(this, id);
  std::array<Var, 2> out{};
  switch (op) {
    case Op::Leaf: break;
    case Op::Add:
      if (need_a) out[0] = g;
      if (need_b) out[1] = g;
      break;
    case Op::Sub:
      if (need_a) out[0] = g;
      if (need_b) out[1] = -g;
      break;
    case Op::Mul:
      if (need_a) out[0] = g * b;
      if (need_b) out[1] = g * a;
      break;
    case Op::Div:
      if (need_a) out[0] = g / b;
      if (need_b) out[1] = -(g * y / b);
      break;
    case Op::Neg: out[0] = -g; break;
    case Op::Scale: out[0] = scale(g, c); break;
    case Op::AddScalar: out[0] = g; break;
    case Op::Square: out[0] = scale(g * a, 2.0); break;
    case Op::Sqrt: out[0] = scale(g / y, 0.5); break;
    case Op::Exp: out[0] = g * y; break;
    case Op::Log: out[0] = g / a; break;
    case Op::Relu: {
      // Subgradient 0 at the kink; the mask is constant, so relu has zero curvature.
      auto mask = kernels::map(nodes_[ia].value, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
      out[0] = g * constant(std::move(mask));
      break;
    }
    case Op::Sigmoid: {
      auto one_minus = add_scalar(-y, 1.0);
      out[0] = g * (y * one_minus);
      break;
    }
    case Op::MatMul: {
      const bool ta = flags & 1, tb = flags & 2;
      if (need_a) {
        if (!ta && !tb) out[0] = matmul(g, b, false, true);
        else if (ta && !tb) out[0] = matmul(b, g, false, true);
        else if (!ta && tb) out[0] = matmul(g, b, false, false);
        else out[0] = matmul(b, g, true, true);
      }
      if (need_b) {
        if (!ta && !tb) out[1] = matmul(a, g, true, false);
        else if (ta && !tb) out[1] = matmul(a, g, false, false);
        else if (!ta && tb) out[1] = matmul(g, a, true, false);
        else out[1] = matmul(g, a, true, true);
      }
      break;
    }
    case Op::BroadcastRows: out[0] = sum_rows(g); break;
    case Op::SumRows: out[0] = broadcast_rows(g, nodes_[ia].value.rows()); break;
    case Op::BroadcastCols: out[0] = sum_cols(g); break;
    case Op::SumCols: out[0] = broadcast_cols(g, nodes_[ia].value.cols()); break;
    case Op::BroadcastScalar: out[0] = sum(g); break;
    case Op::Sum: out[0] = broadcast_scalar(g, nodes_[ia].value.shape()); break;
    case Op::Reshape: out[0] = reshape(g, nodes_[ia].value.shape()); break;
    case Op::LogSoftmax: {
      const std::size_t cols = nodes_[id].value.cols();
      out[0] = g - exp(y) * broadcast_cols(sum_cols(g), cols);
      break;
    }
  }
  return out;
}

inline std::vector<Var> Tape::backward(Var y, std::span<const Var> wrt) {
  if (!owns(y)) throw StructuralError("output is not recorded on this tape");
  if (nodes_[y.id()].value.rank() != 0)
    throw StructuralError("gradient of non-scalar output of shape " + shape_str(nodes_[y.id()].value.shape()));
  const std::size_t n = nodes_.size();
  std::vector<char> relevant(n, 0);
  for (const auto& w : wrt) {
    if (!owns(w)) throw StructuralError("gradient requested for a variable not on this tape");
    relevant[w.id()] = 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nd = nodes_[i];
    if (nd.op == Op::Leaf || relevant[i]) continue;
    if (relevant[nd.a] || (nd.b >= 0 && relevant[nd.b])) relevant[i] = 1;
  }

  std::vector<int> grad(n, -1);
  if (relevant[y.id()]) {
    grad[y.id()] = constant(1.0).id();
    for (int i = y.id(); i >= 0; --i) {
      if (grad[i] < 0 || nodes_[i].op == Op::Leaf) continue;
      const int ia = nodes_[i].a, ib = nodes_[i].b;
      const bool need_a = relevant[ia];
      const bool need_b = ib >= 0 && relevant[ib];
      if (!need_a && !need_b) continue;
      auto contrib = vjp(i, Var(this, grad[i]), need_a, need_b);
      const std::array<int, 2> inputs{ia, ib};
      for (int k = 0; k < 2; ++k) {
        if (!contrib[k].valid()) continue;
        const int in = inputs[k];
        grad[in] = grad[in] < 0 ? contrib[k].id() : (Var(this, grad[in]) + contrib[k]).id();
      }
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    if (grad[w.id()] >= 0) out.emplace_back(this, grad[w.id()]);
    else out.push_back(constant(Tensor(nodes_[w.id()].value.shape())));
  }
  return out;
}

}  // namespace metalab::diff
