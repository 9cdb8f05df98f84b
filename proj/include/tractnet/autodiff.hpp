#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape is an append-only list of primitive records. Every record keeps its
// forward value and the ids of its operands, which is all the backward sweep
// needs. Ids are assigned in creation order, so operands always precede the
// records that consume them.
//
// Subgradient conventions at kinks:
//   relu, abs, pos, neg  -> 0
//   maximum/minimum ties -> 0.5 to each operand

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tractnet/matrix.hpp"

namespace tractnet {

class Tape;

/// Handle to a record on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

enum class Op {
  Leaf,
  Affine,   // W x + b, b broadcast across columns of x
  MatMul,
  Add,
  Sub,
  Scale,    // v * s
  Shift,    // v + s
  Mul,      // elementwise product
  Relu,
  Abs,
  Tanh,
  Max,
  Min,
  Pos,      // [v]+ = max(v, 0)
  Neg,      // [v]- = min(v, 0)
  Sum,
  Mean,
  Detach,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Affine: return "affine";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Scale: return "scale";
    case Op::Shift: return "shift";
    case Op::Mul: return "mul";
    case Op::Relu: return "relu";
    case Op::Abs: return "abs";
    case Op::Tanh: return "tanh";
    case Op::Max: return "max";
    case Op::Min: return "min";
    case Op::Pos: return "pos";
    case Op::Neg: return "neg";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Detach: return "detach";
  }
  return "?";
}

class Tape {
 public:
  struct Node {
    Op op = Op::Leaf;
    std::size_t in[3] = {0, 0, 0};
    double scalar = 0.0;
    Matrix value;
  };

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf record. Parameters and constants are both leaves; a constant is
  /// simply a leaf nobody asks the gradient for.
  Var leaf(Matrix value) { return push(Op::Leaf, {}, 0.0, std::move(value)); }

  const Matrix& value(const Var& v) const { return nodes_.at(v.id).value; }
  double scalar_value(const Var& v) const {
    const Matrix& m = value(v);
    if (m.size() != 1) throw ShapeError("scalar_value: expected 1x1, got " + shape_str(m));
    return m.data[0];
  }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }

  Var push(Op op, std::initializer_list<std::size_t> inputs, double scalar, Matrix value) {
    Node n;
    n.op = op;
    std::size_t k = 0;
    for (auto id : inputs) n.in[k++] = id;
    n.scalar = scalar;
    n.value = std::move(value);
    const std::size_t r = n.value.rows, c = n.value.cols;
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1, r, c};
  }

  /// Reverse sweep from a 1x1 output. Every entry of `wrt` must be a leaf.
  /// Returns one gradient matrix per entry of `wrt` (zeros when unreachable).
  std::vector<Matrix> gradient(const Var& output, std::span<const Var> wrt) const;

 private:
  std::vector<Node> nodes_;
};

namespace detail {

inline Tape& tape_of(const Var& a) {
  if (!a.tape) throw std::logic_error("Var is not attached to a tape");
  return *a.tape;
}
inline Tape& tape_of(const Var& a, const Var& b) {
  if (a.tape != b.tape) throw std::logic_error("operands live on different tapes");
  return tape_of(a);
}
inline void require_same(const char* prim, const Tape& t, const Var& a, const Var& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw_shape(prim, t.value(a), t.value(b));
}

template <class F>
Matrix map(const Matrix& x, F f) {
  Matrix out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = f(x.data[i]);
  return out;
}
template <class F>
Matrix zip(const Matrix& x, const Matrix& y, F f) {
  Matrix out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = f(x.data[i], y.data[i]);
  return out;
}

}  // namespace detail

inline Var affine(const Var& w, const Var& x, const Var& b) {
  Tape& t = detail::tape_of(w, x);
  detail::tape_of(w, b);
  if (w.cols != x.rows) throw ShapeError("affine: W " + shape_str(w.rows, w.cols) + " vs x " + shape_str(x.rows, x.cols));
  if (b.rows != w.rows || b.cols != 1)
    throw ShapeError("affine: bias " + shape_str(b.rows, b.cols) + " vs W " + shape_str(w.rows, w.cols));
  return t.push(Op::Affine, {w.id, x.id, b.id}, 0.0, matmul_kernel(t.value(w), t.value(x), &t.value(b)));
}

inline Var matmul(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a, b);
  if (a.cols != b.rows) throw_shape("matmul", t.value(a), t.value(b));
  return t.push(Op::MatMul, {a.id, b.id}, 0.0, matmul_kernel(t.value(a), t.value(b)));
}

inline Var add(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a, b);
  detail::require_same("add", t, a, b);
  return t.push(Op::Add, {a.id, b.id}, 0.0, detail::zip(t.value(a), t.value(b), [](double x, double y) { return x + y; }));
}

inline Var sub(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a, b);
  detail::require_same("sub", t, a, b);
  return t.push(Op::Sub, {a.id, b.id}, 0.0, detail::zip(t.value(a), t.value(b), [](double x, double y) { return x - y; }));
}

inline Var scale(const Var& a, double s) {
  Tape& t = detail::tape_of(a);
  return t.push(Op::Scale, {a.id}, s, detail::map(t.value(a), [s](double x) { return x * s; }));
}

inline Var shift(const Var& a, double s) {
  Tape& t = detail::tape_of(a);
  return t.push(Op::Shift, {a.id}, s, detail::map(t.value(a), [s](double x) { return x + s; }));
}

inline Var mul(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a, b);
  detail::require_same("mul", t, a, b);
  return t.push(Op::Mul, {a.id, b.id}, 0.0, detail::zip(t.value(a), t.value(b), [](double x, double y) { return x * y; }));
}

inline Var relu(const Var& a) {
  Tape& t = detail::tape_of(a);
  return t.push(Op::Relu, {a.id}, 0.0, detail::map(t.value(a), [](double x) { return x > 0.0 ? x : 0.0; }));
}

inline Var abs(const Var& a) {
  Tape& t = detail::tape_of(a);
  return t.push(Op::Abs, {a.id}, 0.0, detail::map(t.value(a), [](double x) { return std::fabs(x); }));
}

inline Var tanh(const Var& a) {
  Tape& t = detail::tape_of(a);
  return t.push(Op::Tanh, {a.id}, 0.0, detail::map(t.value(a), [](double x) { return std::tanh(x); }));
}

inline Var maximum(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a, b);
  detail::require_same("max", t, a, b);
  return t.push(Op::Max, {a.id, b.id}, 0.0, detail::zip(t.value(a), t.value(b), [](double x, double y) { return x >= y ? x : y; }));
}

inline Var minimum(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a, b);
  detail::require_same("min", t, a, b);
  return t.push(Op::Min, {a.id, b.id}, 0.0, detail::zip(t.value(a), t.value(b), [](double x, double y) { return x <= y ? x : y; }));
}

inline Var pos(const Var& a) {
  Tape& t = detail::tape_of(a);
  return t.push(Op::Pos, {a.id}, 0.0, detail::map(t.value(a), [](double x) { return x > 0.0 ? x : 0.0; }));
}

inline Var neg(const Var& a) {
  Tape& t = detail::tape_of(a);
  return t.push(Op::Neg, {a.id}, 0.0, detail::map(t.value(a), [](double x) { return x < 0.0 ? x : 0.0; }));
}

inline Var sum(const Var& a) {
  Tape& t = detail::tape_of(a);
  double s = 0.0;
  for (double x : t.value(a).data) s += x;
  return t.push(Op::Sum, {a.id}, 0.0, Matrix::scalar(s));
}

inline Var mean(const Var& a) {
  Tape& t = detail::tape_of(a);
  if (a.rows * a.cols == 0) throw ShapeError("mean: empty operand");
  double s = 0.0;
  for (double x : t.value(a).data) s += x;
  return t.push(Op::Mean, {a.id}, 0.0, Matrix::scalar(s / static_cast<double>(a.rows * a.cols)));
}

/// Stop-gradient: forward value is an exact copy, backward contribution is zero.
inline Var detach(const Var& a) {
  Tape& t = detail::tape_of(a);
  return t.push(Op::Detach, {a.id}, 0.0, t.value(a));
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

inline std::vector<Matrix> Tape::gradient(const Var& output, std::span<const Var> wrt) const {
  if (output.tape != this) throw std::logic_error("gradient: output belongs to another tape");
  const Matrix& out_val = value(output);
  if (out_val.rows != 1 || out_val.cols != 1)
    throw ShapeError("gradient: output must be 1x1, got " + shape_str(out_val));
  for (const Var& w : wrt) {
    if (w.tape != this) throw std::logic_error("gradient: wrt Var belongs to another tape");
    if (nodes_.at(w.id).op != Op::Leaf) throw std::invalid_argument("gradient: wrt Var is not a leaf");
  }

  std::vector<Matrix> adj(output.id + 1);
  auto touch = [&](std::size_t id) -> Matrix& {
    Matrix& m = adj[id];
    if (m.data.empty() && nodes_[id].value.size() != 0) m = Matrix(nodes_[id].value.rows, nodes_[id].value.cols, 0.0);
    return m;
  };
  touch(output.id).data[0] = 1.0;

  for (std::size_t id = output.id + 1; id-- > 0;) {
    if (adj[id].data.empty()) continue;
    const Node& n = nodes_[id];
    const Matrix& g = adj[id];
    switch (n.op) {
      case Op::Leaf:
      case Op::Detach:
        break;
      case Op::Affine: {
        const Matrix& w = nodes_[n.in[0]].value;
        const Matrix& x = nodes_[n.in[1]].value;
        add_matmul_bt(touch(n.in[0]), g, x);
        add_matmul_at(touch(n.in[1]), w, g);
        Matrix& gb = touch(n.in[2]);
        for (std::size_t i = 0; i < g.rows; ++i)
          for (std::size_t j = 0; j < g.cols; ++j) gb.data[i] += g(i, j);
        break;
      }
      case Op::MatMul: {
        const Matrix& a = nodes_[n.in[0]].value;
        const Matrix& b = nodes_[n.in[1]].value;
        add_matmul_bt(touch(n.in[0]), g, b);
        add_matmul_at(touch(n.in[1]), a, g);
        break;
      }
      case Op::Add:
        axpy(touch(n.in[0]), 1.0, g);
        axpy(touch(n.in[1]), 1.0, g);
        break;
      case Op::Sub:
        axpy(touch(n.in[0]), 1.0, g);
        axpy(touch(n.in[1]), -1.0, g);
        break;
      case Op::Scale:
        axpy(touch(n.in[0]), n.scalar, g);
        break;
      case Op::Shift:
        axpy(touch(n.in[0]), 1.0, g);
        break;
      case Op::Mul: {
        const Matrix& a = nodes_[n.in[0]].value;
        const Matrix& b = nodes_[n.in[1]].value;
        Matrix& ga = touch(n.in[0]);
        Matrix& gb = touch(n.in[1]);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          ga.data[i] += g.data[i] * b.data[i];
          gb.data[i] += g.data[i] * a.data[i];
        }
        break;
      }
      case Op::Relu:
      case Op::Pos: {
        const Matrix& x = nodes_[n.in[0]].value;
        Matrix& gx = touch(n.in[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i)
          if (x.data[i] > 0.0) gx.data[i] += g.data[i];
        break;
      }
      case Op::Neg: {
        const Matrix& x = nodes_[n.in[0]].value;
        Matrix& gx = touch(n.in[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i)
          if (x.data[i] < 0.0) gx.data[i] += g.data[i];
        break;
      }
      case Op::Abs: {
        const Matrix& x = nodes_[n.in[0]].value;
        Matrix& gx = touch(n.in[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          if (x.data[i] > 0.0) gx.data[i] += g.data[i];
          else if (x.data[i] < 0.0) gx.data[i] -= g.data[i];
        }
        break;
      }
      case Op::Tanh: {
        Matrix& gx = touch(n.in[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          const double y = n.value.data[i];
          gx.data[i] += g.data[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::Max:
      case Op::Min: {
        const Matrix& a = nodes_[n.in[0]].value;
        const Matrix& b = nodes_[n.in[1]].value;
        Matrix& ga = touch(n.in[0]);
        Matrix& gb = touch(n.in[1]);
        const bool is_max = n.op == Op::Max;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          const double x = a.data[i], y = b.data[i];
          if (x == y) {
            ga.data[i] += 0.5 * g.data[i];
            gb.data[i] += 0.5 * g.data[i];
          } else if ((x > y) == is_max) {
            ga.data[i] += g.data[i];
          } else {
            gb.data[i] += g.data[i];
          }
        }
        break;
      }
      case Op::Sum: {
        Matrix& gx = touch(n.in[0]);
        for (double& v : gx.data) v += g.data[0];
        break;
      }
      case Op::Mean: {
        Matrix& gx = touch(n.in[0]);
        const double s = g.data[0] / static_cast<double>(gx.data.size());
        for (double& v : gx.data) v += s;
        break;
      }
    }
  }

  std::vector<Matrix> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (w.id < adj.size() && !adj[w.id].data.empty()) out.push_back(adj[w.id]);
    else out.emplace_back(w.rows, w.cols, 0.0);
  }
  return out;
}

}  // namespace tractnet
