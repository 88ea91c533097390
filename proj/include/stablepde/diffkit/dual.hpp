#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <ostream>

#include <Eigen/Core>

namespace stablepde::diffkit {

/// Forward-mode dual number a + b·ε with ε² = 0.
///
/// Every arithmetic primitive carries the chain rule in its tangent part, so
/// evaluating any composition with the input seeded as {x, 1} yields f'(x) in
/// the tangent. Running a reverse sweep over Dual values (forward-over-reverse)
/// turns gradients into Hessian-vector products.
template <typename T>
struct Dual {
  T primal{0};
  T tangent{0};

  constexpr Dual() = default;
  constexpr Dual(T value) : primal(value), tangent(0) {}  // NOLINT: implicit constant promotion
  constexpr Dual(T value, T slope) : primal(value), tangent(slope) {}

  constexpr Dual& operator+=(const Dual& o) {
    primal += o.primal;
    tangent += o.tangent;
    return *this;
  }
  constexpr Dual& operator-=(const Dual& o) {
    primal -= o.primal;
    tangent -= o.tangent;
    return *this;
  }
  constexpr Dual& operator*=(const Dual& o) {
    tangent = tangent * o.primal + primal * o.tangent;
    primal *= o.primal;
    return *this;
  }
  constexpr Dual& operator/=(const Dual& o) {
    const T q = primal / o.primal;
    tangent = (tangent - q * o.tangent) / o.primal;
    primal = q;
    return *this;
  }
};

template <typename T>
constexpr Dual<T> operator-(const Dual<T>& a) { return {-a.primal, -a.tangent}; }
template <typename T>
constexpr Dual<T> operator+(Dual<T> a, const Dual<T>& b) { return a += b; }
template <typename T>
constexpr Dual<T> operator-(Dual<T> a, const Dual<T>& b) { return a -= b; }
template <typename T>
constexpr Dual<T> operator*(Dual<T> a, const Dual<T>& b) { return a *= b; }
template <typename T>
constexpr Dual<T> operator/(Dual<T> a, const Dual<T>& b) { return a /= b; }

// Comparisons look at the primal only; branches (sign, abs, clip) follow it.
template <typename T>
constexpr bool operator==(const Dual<T>& a, const Dual<T>& b) { return a.primal == b.primal; }
template <typename T>
constexpr bool operator!=(const Dual<T>& a, const Dual<T>& b) { return a.primal != b.primal; }
template <typename T>
constexpr bool operator<(const Dual<T>& a, const Dual<T>& b) { return a.primal < b.primal; }
template <typename T>
constexpr bool operator>(const Dual<T>& a, const Dual<T>& b) { return a.primal > b.primal; }
template <typename T>
constexpr bool operator<=(const Dual<T>& a, const Dual<T>& b) { return a.primal <= b.primal; }
template <typename T>
constexpr bool operator>=(const Dual<T>& a, const Dual<T>& b) { return a.primal >= b.primal; }

template <typename T>
Dual<T> tanh(const Dual<T>& a) {
  using std::tanh;
  const T t = tanh(a.primal);
  return {t, (T(1) - t * t) * a.tangent};
}
template <typename T>
Dual<T> exp(const Dual<T>& a) {
  using std::exp;
  const T e = exp(a.primal);
  return {e, e * a.tangent};
}
template <typename T>
Dual<T> sin(const Dual<T>& a) {
  using std::cos;
  using std::sin;
  return {sin(a.primal), cos(a.primal) * a.tangent};
}
template <typename T>
Dual<T> cos(const Dual<T>& a) {
  using std::cos;
  using std::sin;
  return {cos(a.primal), -sin(a.primal) * a.tangent};
}
template <typename T>
Dual<T> abs(const Dual<T>& a) {
  if (a.primal > T(0)) return a;
  if (a.primal < T(0)) return -a;
  return {T(0), T(0)};
}
template <typename T>
Dual<T> sqrt(const Dual<T>& a) {
  using std::sqrt;
  const T s = sqrt(a.primal);
  return {s, a.tangent / (T(2) * s)};
}
template <typename T>
bool isfinite(const Dual<T>& a) {
  using std::isfinite;
  return isfinite(a.primal) && isfinite(a.tangent);
}

template <typename T>
std::ostream& operator<<(std::ostream& os, const Dual<T>& a) {
  return os << a.primal << "+" << a.tangent << "e";
}

/// Scalar-generic helpers used by the tape so that one implementation of each
/// primitive serves both `double` and `Dual<double>`.
inline double primal_of(double v) { return v; }
template <typename T>
T primal_of(const Dual<T>& v) { return v.primal; }

inline bool finite_scalar(double v) { return std::isfinite(v); }
template <typename T>
bool finite_scalar(const Dual<T>& v) { return isfinite(v); }

}  // namespace stablepde::diffkit

namespace Eigen {

template <typename T>
struct NumTraits<stablepde::diffkit::Dual<T>> : NumTraits<T> {
  using Real = stablepde::diffkit::Dual<T>;
  using NonInteger = stablepde::diffkit::Dual<T>;
  using Nested = stablepde::diffkit::Dual<T>;
  using Literal = stablepde::diffkit::Dual<T>;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 2 * NumTraits<T>::ReadCost,
    AddCost = 2 * NumTraits<T>::AddCost,
    MulCost = 3 * NumTraits<T>::MulCost + NumTraits<T>::AddCost
  };
};

}  // namespace Eigen
