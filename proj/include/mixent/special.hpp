#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <functional>

#include "mixent/error.hpp"

namespace mixent {

/// psi(x) = d/dx log Gamma(x) for x > 0: upward recurrence to x >= 10, then
/// the asymptotic Bernoulli series.
inline double digamma(double x) {
  if (!(x > 0.0)) throw UsageError("digamma is implemented for x > 0 only");
  double acc = 0.0;
  while (x < 10.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // B_{2k} / (2k) for k = 1..7
  const double series =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
  return acc + std::log(x) - 0.5 * inv - series;
}

/// Adaptive 15-point Gauss-Kronrod integral of f over [a, b].
inline double integrate_gk(const std::function<double(double)>& f, double a, double b, double tol = 1e-10,
                           unsigned max_depth = 30) {
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, max_depth, tol, &err);
  if (!std::isfinite(v)) throw NumericalError("quadrature produced a non-finite value");
  return v;
}

}  // namespace mixent
