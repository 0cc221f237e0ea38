#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rfconc/activation.hpp"
#include "rfconc/errors.hpp"
#include "rfconc/quadrature.hpp"

namespace rfconc {

// Hermite-coefficient profile of an activation under the standard Gaussian
// measure. Immutable after construction; regression code reads coefficients
// only through this type, so the truncation point is a single knob.
struct HermiteProfile {
  std::vector<double> coeffs;  // zeta_0 .. zeta_k_max
  double l2_norm_sq = 0.0;     // E[sigma(xi)^2]
  double l4_norm = 0.0;        // E[sigma(xi)^4]^(1/4)
  int k_max = 0;
  double quad_tol = 0.0;

  double l4_norm_sq() const { return l4_norm * l4_norm; }
};

namespace detail {

// Truncation radius for the Gaussian integrals. exp(-72) leaves < 1e-30
// relative mass for polynomially bounded activations; not configurable.
constexpr double kQuadRadius = 12.0;

constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

inline double gauss_weight(double x) {
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// Integration breakpoints: the interval endpoints plus any activation kink.
inline std::vector<double> integration_points(const ActivationSpec& act) {
  if (act.has_kink_at_zero())
    return {-kQuadRadius, 0.0, kQuadRadius};
  return {-kQuadRadius, kQuadRadius};
}

// Cheap decay check on the tail integrand. A polynomially bounded sigma makes
// |sigma(x)| exp(-x^2/4) collapse between |x| = 6 and |x| = 12; anything that
// grows there would poison the truncated integral.
inline void check_tail_decay(const ActivationSpec& act) {
  for (const double sgn : {-1.0, 1.0}) {
    const double inner = std::abs(act(sgn * 6.0)) * std::exp(-9.0);
    const double outer = std::abs(act(sgn * kQuadRadius)) * std::exp(-36.0);
    if (outer > inner && outer > 1e-12)
      throw UnboundedActivation(
          "activation grows too fast for the Gaussian quadrature window");
  }
}

}  // namespace detail

// Hermite coefficients zeta_k = E[sigma(xi) h_k(xi)] for k = 0..k_max, plus
// the L2(Gamma) and L4(Gamma) norms, each to absolute accuracy tol.
inline HermiteProfile expand_activation(const ActivationSpec& act, int k_max,
                                        double tol) {
  if (k_max < 0) throw ConfigError("expand_activation: k_max must be >= 0");
  if (!(tol > 0.0)) throw ConfigError("expand_activation: tol must be > 0");
  detail::check_tail_decay(act);

  const std::vector<double> pts = detail::integration_points(act);
  HermiteProfile p;
  p.k_max = k_max;
  p.quad_tol = tol;
  p.coeffs.resize(k_max + 1);
  for (int k = 0; k <= k_max; ++k) {
    p.coeffs[k] = quad::integrate(
        [&](double x) {
          return act(x) * eval_hermite(k, x) * detail::gauss_weight(x);
        },
        pts, tol);
  }
  p.l2_norm_sq = quad::integrate(
      [&](double x) {
        const double s = act(x);
        return s * s * detail::gauss_weight(x);
      },
      pts, tol);
  const double m4 = quad::integrate(
      [&](double x) {
        const double s = act(x);
        return s * s * s * s * detail::gauss_weight(x);
      },
      pts, tol);
  p.l4_norm = std::pow(std::max(m4, 0.0), 0.25);
  return p;
}

// Tail mass sigma_{>ell}^2 = ||sigma||_2^2 - sum_{k<=ell} zeta_k^2. Small
// negative values are quadrature noise and clamp to zero; anything below
// -10*quad_tol means the profile is inconsistent.
inline double tail_mass(const HermiteProfile& profile, int ell) {
  if (ell < 0 || ell > profile.k_max)
    throw ConfigError("tail_mass: ell must be in [0, k_max]");
  double s = profile.l2_norm_sq;
  for (int k = 0; k <= ell; ++k) s -= profile.coeffs[k] * profile.coeffs[k];
  if (s < -10.0 * profile.quad_tol)
    throw NegativeTail("tail mass " + std::to_string(s) +
                       " below -10*quad_tol; profile inconsistent");
  return s > 0.0 ? s : 0.0;
}

// Whether the profile belongs to a polynomial activation, i.e. the expansion
// terminates within quadrature noise at or before k_max.
inline bool profile_is_polynomial(const HermiteProfile& profile) {
  return tail_mass(profile, profile.k_max) <= 10.0 * profile.quad_tol;
}

// <h_j, h_k> under the Gaussian measure, computed by the same quadrature
// backend (self-consistency check used by the acceptance suite).
inline double hermite_inner_product(int j, int k, double tol = 1e-12) {
  return quad::integrate(
      [&](double x) {
        return eval_hermite(j, x) * eval_hermite(k, x) *
               detail::gauss_weight(x);
      },
      {-detail::kQuadRadius, detail::kQuadRadius}, tol);
}

// Monomial coefficients of h_k, lowest degree first. Exact in double for the
// moderate k used here.
inline std::vector<double> hermite_monomial_coeffs(int k) {
  std::vector<double> prev{1.0};
  if (k == 0) return prev;
  std::vector<double> cur{0.0, 1.0};
  for (int j = 1; j < k; ++j) {
    std::vector<double> next(j + 2, 0.0);
    const double a = 1.0 / std::sqrt(static_cast<double>(j + 1));
    const double b = std::sqrt(static_cast<double>(j)) * a;
    for (int i = 0; i <= j; ++i) next[i + 1] += a * cur[i];
    for (int i = 0; i < static_cast<int>(prev.size()); ++i)
      next[i] -= b * prev[i];
    prev = std::move(cur);
    cur = std::move(next);
  }
  return cur;
}

// Converts normalized-Hermite coefficients to monomial coefficients, so the
// polynomial can be evaluated by Horner's rule.
inline std::vector<double> hermite_to_monomial(const std::vector<double>& c) {
  std::vector<double> out(c.size(), 0.0);
  for (std::size_t k = 0; k < c.size(); ++k) {
    if (c[k] == 0.0) continue;
    const std::vector<double> hk = hermite_monomial_coeffs(static_cast<int>(k));
    for (std::size_t i = 0; i < hk.size(); ++i) out[i] += c[k] * hk[i];
  }
  return out;
}

}  // namespace rfconc
