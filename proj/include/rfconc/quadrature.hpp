#pragma once

#include <algorithm>
#include <cmath>
#include <queue>
#include <vector>

#include "rfconc/errors.hpp"

namespace rfconc {
namespace quad {

// Gauss-Kronrod 7-15 pair (QUADPACK dqk15 nodes and weights).
namespace detail {
constexpr double kXgk[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769,
    0.741531185599394, 0.586087235467691, 0.405845151377397,
    0.207784955007898, 0.000000000000000};
constexpr double kWgk[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728};
constexpr double kWg[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469};
}  // namespace detail

struct Estimate {
  double value = 0.0;
  double error = 0.0;
};

template <class F>
Estimate gk15(const F& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  double kron = detail::kWgk[7] * fc;
  double gauss = detail::kWg[3] * fc;
  for (int j = 0; j < 7; ++j) {
    const double fa = f(c - h * detail::kXgk[j]);
    const double fb = f(c + h * detail::kXgk[j]);
    kron += detail::kWgk[j] * (fa + fb);
    if (j % 2 == 1) gauss += detail::kWg[j / 2] * (fa + fb);
  }
  return {kron * h, std::abs(kron - gauss) * std::abs(h)};
}

// Globally adaptive integration over the union of [points[i], points[i+1]].
// Bisects the interval with the largest error estimate until the summed
// estimate drops below abs_tol, or below the double-precision floor of the
// integrand mass (beyond which subdividing only reshuffles roundoff).
template <class F>
double integrate(const F& f, const std::vector<double>& points, double abs_tol,
                 int max_intervals = 4000) {
  struct Interval {
    double a, b, value, error;
    bool operator<(const Interval& o) const { return error < o.error; }
  };
  std::priority_queue<Interval> heap;
  double total = 0.0, total_err = 0.0, total_abs = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    if (points[i] >= points[i + 1]) continue;
    const Estimate e = gk15(f, points[i], points[i + 1]);
    heap.push({points[i], points[i + 1], e.value, e.error});
    total += e.value;
    total_err += e.error;
    total_abs += std::abs(e.value);
  }
  int n_intervals = static_cast<int>(heap.size());
  auto tolerance = [&]() {
    if (!std::isfinite(total) || !std::isfinite(total_err))
      throw QuadratureNotConverged("integrand is not integrable (overflow)");
    return std::max(abs_tol, 64.0 * 2.220446049250313e-16 * total_abs);
  };
  while (total_err > tolerance() && !heap.empty()) {
    if (n_intervals >= max_intervals)
      throw QuadratureNotConverged(
          "adaptive Gauss-Kronrod ran out of intervals before reaching "
          "tolerance");
    const Interval worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (mid <= worst.a || mid >= worst.b)
      throw QuadratureNotConverged("interval underflow in adaptive bisection");
    const Estimate left = gk15(f, worst.a, mid);
    const Estimate right = gk15(f, mid, worst.b);
    total += left.value + right.value - worst.value;
    total_err += left.error + right.error - worst.error;
    total_abs += std::abs(left.value) + std::abs(right.value) -
                 std::abs(worst.value);
    heap.push({worst.a, mid, left.value, left.error});
    heap.push({mid, worst.b, right.value, right.error});
    ++n_intervals;
  }
  return total;
}

template <class F>
double integrate(const F& f, double a, double b, double abs_tol) {
  return integrate(f, std::vector<double>{a, b}, abs_tol);
}

}  // namespace quad
}  // namespace rfconc
