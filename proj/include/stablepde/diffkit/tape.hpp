#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "stablepde/diffkit/dual.hpp"

namespace stablepde::diffkit {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

class DiffError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation's preconditions on shapes or outputs do not hold.
class ContractViolation : public DiffError {
 public:
  using DiffError::DiffError;
};

class MissingLeaf : public DiffError {
 public:
  using DiffError::DiffError;
};

enum class Op : std::uint8_t {
  leaf,
  constant,
  add,
  sub,
  mul,
  div,
  tanh,
  exp,
  sin,
  matmul,
  sum,
  mean,
  square,
  abs,
  sign,
  clip,
};

const char* op_name(Op op);

template <typename S>
class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
template <typename S>
class Var {
 public:
  Var() = default;

  [[nodiscard]] bool valid() const { return tape_ != nullptr; }
  [[nodiscard]] int id() const { return id_; }
  [[nodiscard]] Tape<S>* tape() const { return tape_; }
  [[nodiscard]] const Matrix<S>& value() const { return tape_->value(*this); }
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }

 private:
  friend class Tape<S>;
  Var(Tape<S>* tape, int id) : tape_(tape), id_(id) {}

  Tape<S>* tape_ = nullptr;
  int id_ = -1;
};

namespace detail {

template <typename S>
S scalar_sign(const S& v) {
  if (v > S(0)) return S(1);
  if (v < S(0)) return S(-1);
  return S(0);
}

template <typename S>
Matrix<S> map_tanh(const Matrix<S>& m) {
  if constexpr (std::is_same_v<S, double>) {
    return m.array().tanh().matrix();
  } else {
    return m.unaryExpr([](const S& v) {
      using std::tanh;
      return tanh(v);
    });
  }
}

template <typename S>
Matrix<S> map_exp(const Matrix<S>& m) {
  return m.unaryExpr([](const S& v) {
    using std::exp;
    return exp(v);
  });
}

template <typename S>
Matrix<S> map_sin(const Matrix<S>& m) {
  return m.unaryExpr([](const S& v) {
    using std::sin;
    return sin(v);
  });
}

template <typename S>
Matrix<S> map_cos(const Matrix<S>& m) {
  return m.unaryExpr([](const S& v) {
    using std::cos;
    return cos(v);
  });
}

template <typename S>
Matrix<S> map_abs(const Matrix<S>& m) {
  return m.unaryExpr([](const S& v) {
    using std::abs;
    return abs(v);
  });
}

template <typename S>
Matrix<S> map_sign(const Matrix<S>& m) {
  return m.unaryExpr([](const S& v) { return scalar_sign(v); });
}

template <typename S>
bool is_scalar(const Matrix<S>& m) {
  return m.rows() == 1 && m.cols() == 1;
}

// Elementwise binary op with optional 1x1 broadcast on either side.
template <typename S, typename F>
Matrix<S> zip(const Matrix<S>& a, const Matrix<S>& b, F f) {
  if (is_scalar(a) && !is_scalar(b)) {
    const S s = a(0, 0);
    return b.unaryExpr([&](const S& v) { return f(s, v); });
  }
  if (is_scalar(b) && !is_scalar(a)) {
    const S s = b(0, 0);
    return a.unaryExpr([&](const S& v) { return f(v, s); });
  }
  return a.binaryExpr(b, f);
}

// Folds an adjoint back onto an operand that may have been broadcast.
template <typename S>
Matrix<S> reduce_to(const Matrix<S>& adj, const Matrix<S>& operand) {
  if (is_scalar(operand) && !is_scalar(adj)) {
    Matrix<S> out(1, 1);
    out(0, 0) = adj.sum();
    return out;
  }
  return adj;
}

}  // namespace detail

/// Ordered record of matrix-valued primitive operations.
///
/// Nodes are appended in evaluation order, so the record is topologically
/// sorted by construction. A single reverse sweep yields adjoints for every
/// node that depends on a leaf; constants are never differentiated. The tape
/// is templated on the scalar so the same record can carry `double` or
/// `Dual<double>` values.
template <typename S>
class Tape {
 public:
  struct Node {
    Op op = Op::constant;
    int lhs = -1;
    int rhs = -1;
    bool needs_grad = false;
    bool trans_lhs = false;
    bool trans_rhs = false;
    S lo{0};
    S hi{0};
    Matrix<S> value;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<S> leaf(Matrix<S> value) {
    Node n;
    n.op = Op::leaf;
    n.needs_grad = true;
    n.value = std::move(value);
    leaves_.push_back(static_cast<int>(nodes_.size()));
    return push(std::move(n));
  }

  Var<S> constant(Matrix<S> value) {
    Node n;
    n.op = Op::constant;
    n.value = std::move(value);
    return push(std::move(n));
  }

  Var<S> scalar(S v) {
    Matrix<S> m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  Var<S> unary(Op op, Var<S> a) {
    check_owned(a);
    Node n;
    n.op = op;
    n.lhs = a.id();
    n.needs_grad = nodes_[a.id()].needs_grad;
    n.value = evaluate(n);
    return push(std::move(n));
  }

  Var<S> binary(Op op, Var<S> a, Var<S> b) {
    check_owned(a);
    check_owned(b);
    const auto& va = nodes_[a.id()].value;
    const auto& vb = nodes_[b.id()].value;
    if (va.rows() != vb.rows() || va.cols() != vb.cols()) {
      if (!detail::is_scalar(va) && !detail::is_scalar(vb)) {
        throw ContractViolation(std::string("shape mismatch in ") + op_name(op) + ": " +
                                shape(va) + " vs " + shape(vb));
      }
    }
    Node n;
    n.op = op;
    n.lhs = a.id();
    n.rhs = b.id();
    n.needs_grad = nodes_[a.id()].needs_grad || nodes_[b.id()].needs_grad;
    n.value = evaluate(n);
    return push(std::move(n));
  }

  Var<S> matmul(Var<S> a, Var<S> b, bool trans_a = false, bool trans_b = false) {
    check_owned(a);
    check_owned(b);
    const auto& va = nodes_[a.id()].value;
    const auto& vb = nodes_[b.id()].value;
    const auto inner_a = trans_a ? va.rows() : va.cols();
    const auto inner_b = trans_b ? vb.cols() : vb.rows();
    if (inner_a != inner_b) {
      throw ContractViolation("matmul inner dimension mismatch: " + shape(va) +
                              (trans_a ? "^T" : "") + " x " + shape(vb) + (trans_b ? "^T" : ""));
    }
    Node n;
    n.op = Op::matmul;
    n.lhs = a.id();
    n.rhs = b.id();
    n.trans_lhs = trans_a;
    n.trans_rhs = trans_b;
    n.needs_grad = nodes_[a.id()].needs_grad || nodes_[b.id()].needs_grad;
    n.value = evaluate(n);
    return push(std::move(n));
  }

  Var<S> clip(Var<S> a, S lo, S hi) {
    check_owned(a);
    if (hi < lo) throw ContractViolation("clip bounds inverted");
    Node n;
    n.op = Op::clip;
    n.lhs = a.id();
    n.lo = lo;
    n.hi = hi;
    n.needs_grad = nodes_[a.id()].needs_grad;
    n.value = evaluate(n);
    return push(std::move(n));
  }

  [[nodiscard]] const Matrix<S>& value(Var<S> v) const {
    check_owned(v);
    return nodes_[v.id()].value;
  }

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] const std::vector<int>& leaves() const { return leaves_; }
  [[nodiscard]] const Node& node(int id) const { return nodes_.at(id); }

  /// Re-evaluates every recorded node with new leaf values, supplied in leaf
  /// creation order. The structure of the record is unchanged.
  void replay(std::span<const Matrix<S>> leaf_values) {
    if (leaf_values.size() != leaves_.size()) {
      throw ContractViolation("replay expects " + std::to_string(leaves_.size()) +
                              " leaf values, got " + std::to_string(leaf_values.size()));
    }
    for (std::size_t i = 0; i < leaves_.size(); ++i) {
      auto& n = nodes_[leaves_[i]];
      if (n.value.rows() != leaf_values[i].rows() || n.value.cols() != leaf_values[i].cols()) {
        throw ContractViolation("replay leaf " + std::to_string(i) + " changes shape");
      }
      n.value = leaf_values[i];
    }
    for (auto& n : nodes_) {
      if (n.op != Op::leaf && n.op != Op::constant) n.value = evaluate(n);
    }
  }

  /// Overwrites a single leaf or constant and re-evaluates everything after it.
  void rebind(Var<S> v, const Matrix<S>& value) {
    check_owned(v);
    auto& n = nodes_[v.id()];
    if (n.op != Op::leaf && n.op != Op::constant) {
      throw ContractViolation("rebind target is not a leaf or constant");
    }
    if (n.value.rows() != value.rows() || n.value.cols() != value.cols()) {
      throw ContractViolation("rebind changes shape");
    }
    n.value = value;
    for (std::size_t i = static_cast<std::size_t>(v.id()) + 1; i < nodes_.size(); ++i) {
      auto& m = nodes_[i];
      if (m.op != Op::leaf && m.op != Op::constant) m.value = evaluate(m);
    }
  }

  /// Reverse sweep from `out` seeded with `seed`. Returns one adjoint per node;
  /// nodes that do not depend on a leaf keep an empty matrix.
  [[nodiscard]] std::vector<Matrix<S>> backward(Var<S> out, const Matrix<S>& seed) const {
    check_owned(out);
    const auto& vo = nodes_[out.id()].value;
    if (seed.rows() != vo.rows() || seed.cols() != vo.cols()) {
      throw ContractViolation("seed shape " + shape(seed) + " does not match output " + shape(vo));
    }
    std::vector<Matrix<S>> adj(nodes_.size());
    adj[out.id()] = seed;
    for (int i = out.id(); i >= 0; --i) {
      const Node& n = nodes_[i];
      if (!n.needs_grad || adj[i].size() == 0) continue;
      if (n.op == Op::leaf) continue;
      propagate(n, adj[i], adj);
    }
    return adj;
  }

  /// Gradient of a 1x1 output with respect to the requested leaves.
  [[nodiscard]] std::vector<Matrix<S>> grad(Var<S> out, std::span<const Var<S>> wrt) const {
    check_owned(out);
    if (!detail::is_scalar(nodes_[out.id()].value)) {
      throw ContractViolation("grad requires a scalar output, got " +
                              shape(nodes_[out.id()].value));
    }
    for (const auto& w : wrt) {
      if (w.tape() != this || w.id() < 0 || w.id() >= static_cast<int>(nodes_.size()) ||
          nodes_[w.id()].op != Op::leaf) {
        throw MissingLeaf("requested variable is not a leaf recorded on this tape");
      }
    }
    Matrix<S> seed(1, 1);
    seed(0, 0) = S(1);
    auto adj = backward(out, seed);
    std::vector<Matrix<S>> result;
    result.reserve(wrt.size());
    for (const auto& w : wrt) {
      const auto& v = nodes_[w.id()].value;
      if (adj[w.id()].size() == 0) {
        result.push_back(Matrix<S>::Zero(v.rows(), v.cols()));
      } else {
        result.push_back(std::move(adj[w.id()]));
      }
    }
    return result;
  }

  [[nodiscard]] std::vector<Matrix<S>> grad(Var<S> out, std::initializer_list<Var<S>> wrt) const {
    std::vector<Var<S>> v(wrt);
    return grad(out, std::span<const Var<S>>(v));
  }

  static std::string shape(const Matrix<S>& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
  }

 private:
  Var<S> push(Node n) {
    nodes_.push_back(std::move(n));
    return Var<S>(this, static_cast<int>(nodes_.size()) - 1);
  }

  void check_owned(Var<S> v) const {
    if (v.tape() != this || v.id() < 0 || v.id() >= static_cast<int>(nodes_.size())) {
      throw ContractViolation("variable does not belong to this tape");
    }
  }

  Matrix<S> evaluate(const Node& n) const {
    using detail::zip;
    const Matrix<S>* a = n.lhs >= 0 ? &nodes_[n.lhs].value : nullptr;
    const Matrix<S>* b = n.rhs >= 0 ? &nodes_[n.rhs].value : nullptr;
    switch (n.op) {
      case Op::add:
        return zip(*a, *b, [](const S& x, const S& y) { return x + y; });
      case Op::sub:
        return zip(*a, *b, [](const S& x, const S& y) { return x - y; });
      case Op::mul:
        if (a->rows() == b->rows() && a->cols() == b->cols()) return a->cwiseProduct(*b);
        return zip(*a, *b, [](const S& x, const S& y) { return x * y; });
      case Op::div:
        return zip(*a, *b, [](const S& x, const S& y) { return x / y; });
      case Op::tanh:
        return detail::map_tanh(*a);
      case Op::exp:
        return detail::map_exp(*a);
      case Op::sin:
        return detail::map_sin(*a);
      case Op::matmul:
        if (n.trans_lhs && n.trans_rhs) return a->transpose() * b->transpose();
        if (n.trans_lhs) return a->transpose() * (*b);
        if (n.trans_rhs) return (*a) * b->transpose();
        return (*a) * (*b);
      case Op::sum: {
        Matrix<S> m(1, 1);
        m(0, 0) = a->sum();
        return m;
      }
      case Op::mean: {
        Matrix<S> m(1, 1);
        m(0, 0) = a->sum() / S(static_cast<double>(a->size()));
        return m;
      }
      case Op::square:
        return a->cwiseProduct(*a);
      case Op::abs:
        return detail::map_abs(*a);
      case Op::sign:
        return detail::map_sign(*a);
      case Op::clip: {
        const S lo = n.lo;
        const S hi = n.hi;
        return a->unaryExpr([lo, hi](const S& v) { return v < lo ? lo : (v > hi ? hi : v); });
      }
      case Op::leaf:
      case Op::constant:
        break;
    }
    return n.value;
  }

  static void accumulate(Matrix<S>& slot, Matrix<S> contribution) {
    if (slot.size() == 0) {
      slot = std::move(contribution);
    } else {
      slot += contribution;
    }
  }

  void propagate(const Node& n, const Matrix<S>& g, std::vector<Matrix<S>>& adj) const {
    using detail::reduce_to;
    using detail::zip;
    const Node* na = n.lhs >= 0 ? &nodes_[n.lhs] : nullptr;
    const Node* nb = n.rhs >= 0 ? &nodes_[n.rhs] : nullptr;
    const bool ga = na != nullptr && na->needs_grad;
    const bool gb = nb != nullptr && nb->needs_grad;
    switch (n.op) {
      case Op::add:
        if (ga) accumulate(adj[n.lhs], reduce_to(g, na->value));
        if (gb) accumulate(adj[n.rhs], reduce_to(g, nb->value));
        break;
      case Op::sub:
        if (ga) accumulate(adj[n.lhs], reduce_to(g, na->value));
        if (gb) accumulate(adj[n.rhs], reduce_to(Matrix<S>(-g), nb->value));
        break;
      case Op::mul:
        if (ga) {
          accumulate(adj[n.lhs],
                     reduce_to(zip(g, nb->value, [](const S& x, const S& y) { return x * y; }),
                               na->value));
        }
        if (gb) {
          accumulate(adj[n.rhs],
                     reduce_to(zip(g, na->value, [](const S& x, const S& y) { return x * y; }),
                               nb->value));
        }
        break;
      case Op::div:
        if (ga) {
          accumulate(adj[n.lhs],
                     reduce_to(zip(g, nb->value, [](const S& x, const S& y) { return x / y; }),
                               na->value));
        }
        if (gb) {
          // d(a/b)/db = -(a/b)/b
          Matrix<S> q = zip(n.value, nb->value, [](const S& x, const S& y) { return x / y; });
          accumulate(adj[n.rhs],
                     reduce_to(zip(g, q, [](const S& x, const S& y) { return -(x * y); }),
                               nb->value));
        }
        break;
      case Op::tanh:
        if (ga) {
          accumulate(adj[n.lhs], g.binaryExpr(n.value, [](const S& x, const S& t) {
            return x * (S(1) - t * t);
          }));
        }
        break;
      case Op::exp:
        if (ga) accumulate(adj[n.lhs], g.cwiseProduct(n.value));
        break;
      case Op::sin:
        if (ga) accumulate(adj[n.lhs], g.cwiseProduct(detail::map_cos(na->value)));
        break;
      case Op::matmul: {
        const Matrix<S>& a = na->value;
        const Matrix<S>& b = nb->value;
        if (ga) {
          // C = op(A) op(B); d op(A) = G op(B)^T
          if (n.trans_lhs) {
            accumulate(adj[n.lhs], n.trans_rhs ? Matrix<S>(b.transpose() * g.transpose())
                                               : Matrix<S>(b * g.transpose()));
          } else {
            accumulate(adj[n.lhs],
                       n.trans_rhs ? Matrix<S>(g * b) : Matrix<S>(g * b.transpose()));
          }
        }
        if (gb) {
          // d op(B) = op(A)^T G
          if (n.trans_rhs) {
            accumulate(adj[n.rhs], n.trans_lhs ? Matrix<S>(g.transpose() * a.transpose())
                                               : Matrix<S>(g.transpose() * a));
          } else {
            accumulate(adj[n.rhs],
                       n.trans_lhs ? Matrix<S>(a * g) : Matrix<S>(a.transpose() * g));
          }
        }
        break;
      }
      case Op::sum:
        if (ga) accumulate(adj[n.lhs], Matrix<S>::Constant(na->value.rows(), na->value.cols(), g(0, 0)));
        break;
      case Op::mean:
        if (ga) {
          const S w = g(0, 0) / S(static_cast<double>(na->value.size()));
          accumulate(adj[n.lhs], Matrix<S>::Constant(na->value.rows(), na->value.cols(), w));
        }
        break;
      case Op::square:
        if (ga) {
          accumulate(adj[n.lhs], g.binaryExpr(na->value, [](const S& x, const S& v) {
            return S(2) * v * x;
          }));
        }
        break;
      case Op::abs:
        if (ga) {
          accumulate(adj[n.lhs], g.binaryExpr(na->value, [](const S& x, const S& v) {
            return x * detail::scalar_sign(v);
          }));
        }
        break;
      case Op::sign:
        // Piecewise constant; zero derivative almost everywhere.
        break;
      case Op::clip:
        if (ga) {
          const S lo = n.lo;
          const S hi = n.hi;
          accumulate(adj[n.lhs], g.binaryExpr(na->value, [lo, hi](const S& x, const S& v) {
            return (v < lo || v > hi) ? S(0) : x;
          }));
        }
        break;
      case Op::leaf:
      case Op::constant:
        break;
    }
  }

  std::vector<Node> nodes_;
  std::vector<int> leaves_;
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::constant: return "constant";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::tanh: return "tanh";
    case Op::exp: return "exp";
    case Op::sin: return "sin";
    case Op::matmul: return "matmul";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::square: return "square";
    case Op::abs: return "abs";
    case Op::sign: return "sign";
    case Op::clip: return "clip";
  }
  return "?";
}

// Expression-style free functions over Var.

template <typename S>
Var<S> operator+(Var<S> a, Var<S> b) { return a.tape()->binary(Op::add, a, b); }
template <typename S>
Var<S> operator-(Var<S> a, Var<S> b) { return a.tape()->binary(Op::sub, a, b); }
template <typename S>
Var<S> operator*(Var<S> a, Var<S> b) { return a.tape()->binary(Op::mul, a, b); }
template <typename S>
Var<S> operator/(Var<S> a, Var<S> b) { return a.tape()->binary(Op::div, a, b); }

template <typename S>
Var<S> operator*(Var<S> a, double c) { return a.tape()->binary(Op::mul, a, a.tape()->scalar(S(c))); }
template <typename S>
Var<S> operator*(double c, Var<S> a) { return a * c; }
template <typename S>
Var<S> operator+(Var<S> a, double c) { return a.tape()->binary(Op::add, a, a.tape()->scalar(S(c))); }
template <typename S>
Var<S> operator-(Var<S> a, double c) { return a.tape()->binary(Op::sub, a, a.tape()->scalar(S(c))); }
template <typename S>
Var<S> operator-(double c, Var<S> a) { return a.tape()->binary(Op::sub, a.tape()->scalar(S(c)), a); }
template <typename S>
Var<S> operator-(Var<S> a) { return a * -1.0; }

template <typename S>
Var<S> tanh(Var<S> a) { return a.tape()->unary(Op::tanh, a); }
template <typename S>
Var<S> exp(Var<S> a) { return a.tape()->unary(Op::exp, a); }
template <typename S>
Var<S> sin(Var<S> a) { return a.tape()->unary(Op::sin, a); }
template <typename S>
Var<S> square(Var<S> a) { return a.tape()->unary(Op::square, a); }
template <typename S>
Var<S> abs(Var<S> a) { return a.tape()->unary(Op::abs, a); }
template <typename S>
Var<S> sign(Var<S> a) { return a.tape()->unary(Op::sign, a); }
template <typename S>
Var<S> sum(Var<S> a) { return a.tape()->unary(Op::sum, a); }
template <typename S>
Var<S> mean(Var<S> a) { return a.tape()->unary(Op::mean, a); }
template <typename S>
Var<S> clip(Var<S> a, double lo, double hi) { return a.tape()->clip(a, S(lo), S(hi)); }

/// op(a)·op(b) where op optionally transposes.
template <typename S>
Var<S> matmul(Var<S> a, Var<S> b, bool trans_a = false, bool trans_b = false) {
  return a.tape()->matmul(a, b, trans_a, trans_b);
}

}  // namespace stablepde::diffkit
