#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>

#include "rfconc/dataset.hpp"
#include "rfconc/errors.hpp"
#include "rfconc/hermite.hpp"
#include "rfconc/kernel.hpp"
#include "rfconc/ridge.hpp"

namespace rfconc {

// Single-neuron teacher f*(x) = tau(<beta, x>) with beta ~ N(0, Id_d) and
// additive label noise N(0, sigma_eps^2).
struct TeacherModel {
  ActivationSpec tau;
  HermiteProfile tau_profile;
  Eigen::VectorXd beta;
  double sigma_eps = 0.0;
  std::uint64_t seed = 0;

  int d() const { return static_cast<int>(beta.size()); }
};

inline TeacherModel sample_teacher(const ActivationSpec& tau, int d,
                                   double sigma_eps, std::uint64_t seed,
                                   int k_max = 16, double tol = 1e-10) {
  if (d < 1) throw ConfigError("sample_teacher: d must be >= 1");
  if (sigma_eps < 0.0) throw ConfigError("sample_teacher: sigma_eps >= 0");
  TeacherModel m;
  m.tau = tau;
  m.tau_profile = expand_activation(tau, k_max, tol);
  m.sigma_eps = sigma_eps;
  m.seed = seed;
  m.beta.resize(d);
  CounterRng rng(substream(seed, "teacher_beta"));
  for (int i = 0; i < d; ++i) m.beta(i) = rng.next_gaussian();
  return m;
}

// y_i = tau(x_i^T beta) + eps_i with i.i.d. N(0, sigma_eps^2) noise drawn
// from noise_seed.
inline Eigen::VectorXd labels(const TeacherModel& model, const DataMatrix& X,
                              std::uint64_t noise_seed) {
  if (X.d() != model.d())
    throw DimensionMismatch("labels: data dimension does not match teacher");
  Eigen::VectorXd y = X.X.transpose() * model.beta;
  for (int i = 0; i < y.size(); ++i) y(i) = model.tau(y(i));
  if (model.sigma_eps > 0.0) {
    CounterRng rng(substream(noise_seed, "label_noise"));
    for (int i = 0; i < y.size(); ++i)
      y(i) += model.sigma_eps * rng.next_gaussian();
  }
  return y;
}

// Fresh unit test points; the default sampler matches the training sphere.
using TestSampler =
    std::function<Eigen::MatrixXd(int m, std::uint64_t seed)>;

inline TestSampler sphere_sampler(int d) {
  return [d](int m, std::uint64_t seed) {
    return sample_sphere(d, m, seed).X;
  };
}

// A fitted predictor: maps a d x m block of test columns to m predictions.
using Predictor = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

// Builds a predictor from labels; the recipe fixes X, the kernel type, the
// ridge parameter and, for RFRR, the weight draw policy. The replicate seed
// lets a recipe redraw W per replicate if that is the policy.
using FitRecipe =
    std::function<Predictor(const Eigen::VectorXd& y, std::uint64_t seed)>;

struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  int replicates = 0;
};

// Monte-Carlo generalization error: X fixed, expectation over
// the teacher signal, label noise, and fresh test points. Each replicate
// redraws (beta, eps), refits through the recipe, and averages squared errors
// over M fresh test points; the standard error is across replicate means.
inline McEstimate generalization_error_mc(const FitRecipe& recipe,
                                          const ActivationSpec& tau,
                                          double sigma_eps, const DataMatrix& X,
                                          const TestSampler& sampler, int B,
                                          int M, std::uint64_t seed) {
  if (B < 2) throw ConfigError("generalization_error_mc: B must be >= 2");
  if (M < 1) throw ConfigError("generalization_error_mc: M must be >= 1");
  Eigen::VectorXd rep_means(B);
  for (int b = 0; b < B; ++b) {
    TeacherModel model =
        sample_teacher(tau, X.d(), sigma_eps,
                       substream(seed, "mc_teacher", static_cast<std::uint64_t>(b)));
    const Eigen::VectorXd y =
        labels(model, X, substream(seed, "mc_noise", static_cast<std::uint64_t>(b)));
    const Predictor predictor =
        recipe(y, substream(seed, "mc_fit", static_cast<std::uint64_t>(b)));
    const Eigen::MatrixXd Z =
        sampler(M, substream(seed, "mc_test", static_cast<std::uint64_t>(b)));
    Eigen::VectorXd truth = Z.transpose() * model.beta;
    for (int i = 0; i < truth.size(); ++i) truth(i) = model.tau(truth(i));
    const Eigen::VectorXd pred = predictor(Z);
    rep_means(b) = (pred - truth).squaredNorm() / static_cast<double>(M);
  }
  McEstimate est;
  est.replicates = B;
  est.mean = rep_means.mean();
  est.stderr_ = std::sqrt((rep_means.array() - est.mean).square().sum() /
                          (static_cast<double>(B) * (B - 1)));
  return est;
}

// ||P_{>ell} f*||^2 = sum_{k > ell} zeta_k(tau)^2.
inline double projection_tail_norm(const HermiteProfile& tau_profile, int ell) {
  return tail_mass(tau_profile, ell);
}

// Lower bound for the RFRR generalization error:
// ||P_{>ell} f*||^2 + sigma_eps^2 E_x[K_ell(X,x)^T (K_ell + lambda Id)^{-2}
// K_ell(X,x)], the variance term estimated over M test points with one
// factorization of K_{ell,lambda}.
inline double lower_bound_estimate(const DataMatrix& X,
                                   const HermiteProfile& sigma_hp,
                                   const HermiteProfile& tau_hp, int ell,
                                   double lambda, double sigma_eps,
                                   const TestSampler& sampler, int M,
                                   std::uint64_t seed) {
  const double bias = projection_tail_norm(tau_hp, ell);
  if (sigma_eps == 0.0) return bias;
  const KernelMatrix Kl = polynomial_kernel(X, sigma_hp, ell);
  Eigen::MatrixXd Kll = Kl.M;
  Kll.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(Kll);
  if (llt.info() != Eigen::Success)
    throw SingularSystem("lower_bound_estimate: K_ell + lambda Id not PD");
  const Eigen::MatrixXd Z = sampler(M, substream(seed, "lb_test"));
  const Eigen::MatrixXd Km =
      cross_kernel_expected(X, Z, sigma_hp, CrossMode::truncated(ell));
  const Eigen::MatrixXd solved = llt.solve(Km);
  const double variance = solved.colwise().squaredNorm().mean();
  return bias + sigma_eps * sigma_eps * variance;
}

// Compatibility check: the teacher should keep every Hermite
// component the student activation carries, for k <= ell. Reported, never
// enforced.
inline bool teacher_compatible(const HermiteProfile& sigma_hp,
                               const HermiteProfile& tau_hp, int ell,
                               double tol = 1e-8) {
  for (int k = 0; k <= ell && k <= sigma_hp.k_max && k <= tau_hp.k_max; ++k) {
    if (std::abs(sigma_hp.coeffs[k]) > tol && std::abs(tau_hp.coeffs[k]) <= tol)
      return false;
  }
  return true;
}

}  // namespace rfconc
