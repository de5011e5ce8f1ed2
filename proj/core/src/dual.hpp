#pragma once

#include <Eigen/Core>

#include <cmath>

namespace hal::detail {

/// Forward-mode dual number with N tangent directions.
template <int N>
struct Dual {
  using Grad = Eigen::Matrix<double, N, 1>;
  double v = 0.0;
  Grad d = Grad::Zero();

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT(google-explicit-constructor)
  Dual(double value, int seed) : v(value) { d[seed] = 1.0; }
  Dual(double value, Grad grad) : v(value), d(std::move(grad)) {}
};

template <int N>
Dual<N> operator+(const Dual<N>& a, const Dual<N>& b) { return {a.v + b.v, a.d + b.d}; }
template <int N>
Dual<N> operator-(const Dual<N>& a, const Dual<N>& b) { return {a.v - b.v, a.d - b.d}; }
template <int N>
Dual<N> operator*(const Dual<N>& a, const Dual<N>& b) { return {a.v * b.v, b.v * a.d + a.v * b.d}; }
template <int N>
Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
  return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
}
template <int N>
Dual<N> operator*(double s, const Dual<N>& a) { return {s * a.v, s * a.d}; }
template <int N>
Dual<N> operator-(double s, const Dual<N>& a) { return {s - a.v, -a.d}; }
template <int N>
Dual<N> log(const Dual<N>& a) { return {std::log(a.v), a.d / a.v}; }

}  // namespace hal::detail
