#pragma once

#include <string>

#include <Eigen/Core>

#include "stablepde/diffkit/dual.hpp"
#include "stablepde/diffkit/tape.hpp"

namespace stablepde::diffkit {

using DualD = Dual<double>;

// A "vector function" here is any generic callable usable as
//   Var<S> fn(Tape<S>&, Var<S> x)
// for S = double and S = Dual<double>, with x an n x 1 column leaf. Outputs of
// any shape are flattened column-major.

namespace detail {

template <typename S>
Eigen::Map<const Matrix<S>> flat(const Matrix<S>& m) {
  return Eigen::Map<const Matrix<S>>(m.data(), m.size(), 1);
}

}  // namespace detail

/// Directional derivative J(x)·v by one forward-mode pass over dual values.
template <typename Fn>
Eigen::VectorXd jvp(Fn&& fn, const Eigen::VectorXd& point, const Eigen::VectorXd& direction) {
  if (point.size() != direction.size()) {
    throw ContractViolation("jvp direction has length " + std::to_string(direction.size()) +
                            ", domain has " + std::to_string(point.size()));
  }
  Tape<DualD> tape;
  Matrix<DualD> x(point.size(), 1);
  for (Eigen::Index i = 0; i < point.size(); ++i) x(i, 0) = DualD(point[i], direction[i]);
  auto y = fn(tape, tape.leaf(std::move(x)));
  const auto& v = y.value();
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = v.data()[i].tangent;
  return out;
}

/// Adjoint action J(x)^T·w by one reverse sweep.
template <typename Fn>
Eigen::VectorXd vjp(Fn&& fn, const Eigen::VectorXd& point, const Eigen::VectorXd& covector) {
  Tape<double> tape;
  auto x = tape.leaf(Matrix<double>(point));
  auto y = fn(tape, x);
  const auto& v = y.value();
  if (v.size() != covector.size()) {
    throw ContractViolation("vjp covector has length " + std::to_string(covector.size()) +
                            ", codomain has " + std::to_string(v.size()));
  }
  Matrix<double> seed = Eigen::Map<const Matrix<double>>(covector.data(), v.rows(), v.cols());
  auto adj = tape.backward(y, seed);
  if (adj[x.id()].size() == 0) return Eigen::VectorXd::Zero(point.size());
  return detail::flat(adj[x.id()]);
}

/// Function value at `point`, flattened.
template <typename Fn>
Eigen::VectorXd evaluate(Fn&& fn, const Eigen::VectorXd& point) {
  Tape<double> tape;
  auto y = fn(tape, tape.constant(Matrix<double>(point)));
  return detail::flat(y.value());
}

/// Dense Jacobian assembled column by column from jvp.
template <typename Fn>
Eigen::MatrixXd dense_jacobian(Fn&& fn, const Eigen::VectorXd& point) {
  const Eigen::Index n = point.size();
  Eigen::MatrixXd jac;
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Unit(n, j);
    Eigen::VectorXd col = jvp(fn, point, e);
    if (j == 0) jac.resize(col.size(), n);
    jac.col(j) = col;
  }
  return jac;
}

/// First and second derivative of a scalar field along one coordinate axis,
/// computed forward-over-reverse: the reverse sweep runs on dual values whose
/// tangent is seeded along `axis`, so the adjoint's tangent is the Hessian
/// column and its diagonal entry is d²u/dy_axis².
///
/// `fn` maps a 1 x d coordinate row to a 1 x 1 value.
struct AxisDerivatives {
  double value = 0;
  double first = 0;
  double second = 0;
};

template <typename Fn>
AxisDerivatives axis_derivatives(Fn&& fn, const Eigen::RowVectorXd& coord, Eigen::Index axis) {
  if (axis < 0 || axis >= coord.size()) {
    throw ContractViolation("axis " + std::to_string(axis) + " out of range for " +
                            std::to_string(coord.size()) + "-dimensional coordinate");
  }
  Tape<DualD> tape;
  Matrix<DualD> y(1, coord.size());
  for (Eigen::Index i = 0; i < coord.size(); ++i) y(0, i) = DualD(coord[i], i == axis ? 1.0 : 0.0);
  auto leaf = tape.leaf(std::move(y));
  auto u = fn(tape, leaf);
  if (u.rows() != 1 || u.cols() != 1) {
    throw ContractViolation("axis_derivatives requires a scalar-valued field");
  }
  Matrix<DualD> seed(1, 1);
  seed(0, 0) = DualD(1.0, 0.0);
  auto adj = tape.backward(u, seed);
  AxisDerivatives d;
  d.value = u.value()(0, 0).primal;
  if (adj[leaf.id()].size() != 0) {
    d.first = adj[leaf.id()](0, axis).primal;
    d.second = adj[leaf.id()](0, axis).tangent;
  }
  return d;
}

template <typename Fn>
double second_derivative(Fn&& fn, const Eigen::RowVectorXd& coord, Eigen::Index axis) {
  return axis_derivatives(fn, coord, axis).second;
}

}  // namespace stablepde::diffkit
