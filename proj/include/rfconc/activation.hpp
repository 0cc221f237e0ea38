#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rfconc/errors.hpp"

namespace rfconc {

enum class ActKind {
  relu,
  leaky_relu,
  tanh,
  sigmoid,
  softplus,
  identity,
  constant,
  hermite_poly,
};

// k-th normalized Hermite polynomial under the standard Gaussian measure,
// via the recurrence h_{k+1}(x) = (x h_k(x) - sqrt(k) h_{k-1}(x)) / sqrt(k+1)
// with h_0 = 1, h_1 = x.
inline double eval_hermite(int k, double x) {
  if (k == 0) return 1.0;
  double hkm1 = 1.0;
  double hk = x;
  for (int j = 1; j < k; ++j) {
    const double hkp1 =
        (x * hk - std::sqrt(static_cast<double>(j)) * hkm1) /
        std::sqrt(static_cast<double>(j + 1));
    hkm1 = hk;
    hk = hkp1;
  }
  return hk;
}

// A scalar nonlinearity: either a named built-in or an explicit polynomial in
// the normalized Hermite basis. Evaluation is pure and deterministic.
struct ActivationSpec {
  ActKind kind = ActKind::identity;
  double param = 0.0;               // leaky_relu slope or constant value
  std::vector<double> coeffs;       // hermite_poly only, c_0..c_m
  std::optional<double> growth_exponent;  // metadata only, never computed with

  double operator()(double x) const {
    switch (kind) {
      case ActKind::relu:
        return x > 0.0 ? x : 0.0;
      case ActKind::leaky_relu:
        return x > 0.0 ? x : param * x;
      case ActKind::tanh:
        return std::tanh(x);
      case ActKind::sigmoid:
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        { const double e = std::exp(x); return e / (1.0 + e); }
      case ActKind::softplus:
        return std::log1p(std::exp(-std::abs(x))) + (x > 0.0 ? x : 0.0);
      case ActKind::identity:
        return x;
      case ActKind::constant:
        return param;
      case ActKind::hermite_poly: {
        // One pass of the recurrence, accumulating sum_k c_k h_k(x).
        double acc = coeffs[0];
        if (coeffs.size() == 1) return acc;
        double hkm1 = 1.0, hk = x;
        acc += coeffs[1] * x;
        for (std::size_t k = 2; k < coeffs.size(); ++k) {
          const double hkp1 =
              (x * hk - std::sqrt(static_cast<double>(k - 1)) * hkm1) /
              std::sqrt(static_cast<double>(k));
          hkm1 = hk;
          hk = hkp1;
          acc += coeffs[k] * hk;
        }
        return acc;
      }
    }
    return 0.0;
  }

  // Degree of the Hermite polynomial, or nullopt for non-polynomial kinds
  // (identity and constant count as polynomials).
  std::optional<int> polynomial_degree() const {
    switch (kind) {
      case ActKind::identity:
        return 1;
      case ActKind::constant:
        return 0;
      case ActKind::hermite_poly: {
        int deg = 0;
        for (std::size_t k = 0; k < coeffs.size(); ++k)
          if (coeffs[k] != 0.0) deg = static_cast<int>(k);
        return deg;
      }
      default:
        return std::nullopt;
    }
  }

  bool has_kink_at_zero() const {
    return kind == ActKind::relu || kind == ActKind::leaky_relu;
  }
};

inline ActivationSpec make_activation(ActKind kind, double param = 0.0) {
  ActivationSpec a;
  a.kind = kind;
  a.param = param;
  return a;
}

inline ActivationSpec make_hermite_poly(std::vector<double> coeffs) {
  if (coeffs.empty())
    throw ConfigError("hermite_poly needs a non-empty coefficient list");
  ActivationSpec a;
  a.kind = ActKind::hermite_poly;
  a.coeffs = std::move(coeffs);
  return a;
}

// The degree-5 polynomial activation used throughout the experiments:
// p = h0 + h1/sqrt(6) + h2/3 + h3/6 + 2 h4/3 + h5/2.
inline ActivationSpec poly5_activation() {
  return make_hermite_poly(
      {1.0, 1.0 / std::sqrt(6.0), 1.0 / 3.0, 1.0 / 6.0, 2.0 / 3.0, 0.5});
}

inline std::vector<double> eval_activation(const ActivationSpec& act,
                                           const std::vector<double>& xs) {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = act(xs[i]);
  return out;
}

// Parses CLI/config activation names. Accepts "relu", "tanh", "sigmoid",
// "softplus", "identity", "poly5", "leaky_relu:<slope>", "constant:<c>" and
// "poly:<c0>,<c1>,..." (normalized-Hermite coefficients).
inline ActivationSpec parse_activation(const std::string& name) {
  const auto colon = name.find(':');
  const std::string head = name.substr(0, colon);
  const std::string arg =
      colon == std::string::npos ? std::string() : name.substr(colon + 1);
  auto need_arg = [&](const char* what) {
    if (arg.empty())
      throw ConfigError(std::string("activation '") + head + "' needs " + what);
  };
  if (head == "relu") return make_activation(ActKind::relu);
  if (head == "tanh") return make_activation(ActKind::tanh);
  if (head == "sigmoid") return make_activation(ActKind::sigmoid);
  if (head == "softplus") return make_activation(ActKind::softplus);
  if (head == "identity") return make_activation(ActKind::identity);
  if (head == "poly5") return poly5_activation();
  if (head == "leaky_relu") {
    need_arg("a slope, e.g. leaky_relu:0.1");
    return make_activation(ActKind::leaky_relu, std::stod(arg));
  }
  if (head == "constant") {
    need_arg("a value, e.g. constant:1.0");
    return make_activation(ActKind::constant, std::stod(arg));
  }
  if (head == "poly") {
    need_arg("coefficients, e.g. poly:1,0.5,0.25");
    std::vector<double> cs;
    std::stringstream ss(arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        std::size_t pos = 0;
        cs.push_back(std::stod(tok, &pos));
        if (pos != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ConfigError("bad polynomial coefficient '" + tok + "'");
      }
    }
    return make_hermite_poly(std::move(cs));
  }
  throw ConfigError("unknown activation '" + name + "'");
}

inline std::string activation_name(const ActivationSpec& a) {
  switch (a.kind) {
    case ActKind::relu: return "relu";
    case ActKind::leaky_relu: return "leaky_relu:" + std::to_string(a.param);
    case ActKind::tanh: return "tanh";
    case ActKind::sigmoid: return "sigmoid";
    case ActKind::softplus: return "softplus";
    case ActKind::identity: return "identity";
    case ActKind::constant: return "constant:" + std::to_string(a.param);
    case ActKind::hermite_poly: {
      std::string s = "poly:";
      for (std::size_t k = 0; k < a.coeffs.size(); ++k) {
        if (k) s += ',';
        s += std::to_string(a.coeffs[k]);
      }
      return s;
    }
  }
  return "?";
}

}  // namespace rfconc
