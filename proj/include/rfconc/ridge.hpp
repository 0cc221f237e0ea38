#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "rfconc/errors.hpp"
#include "rfconc/kernel.hpp"

namespace rfconc {

enum class SolverPath { cholesky, eigen_pseudo };

// A fitted kernel ridge regressor: dual coefficients alpha = K_lambda^{-1} y,
// the diagonal of K_lambda^{-1}, and the in-sample fitted values K alpha.
// Immutable once fit() returns.
struct RidgeFit {
  double lambda = 0.0;
  Eigen::VectorXd alpha;
  Eigen::VectorXd inv_diag;  // [K_lambda^{-1}]_ii
  Eigen::VectorXd y;
  Eigen::VectorXd fitted;    // K alpha on the training set
  SolverPath solver = SolverPath::cholesky;
  double pseudo_threshold = 0.0;

  int n() const { return static_cast<int>(y.size()); }
};

// Solves (K + lambda Id) alpha = y. Tries a Cholesky factorization first;
// when that fails (lambda = 0 with a numerically singular kernel) it falls
// back to an eigendecomposition pseudo-inverse with threshold
// 1e-12 * lambda_max * n, unless the fallback is disabled.
inline RidgeFit fit(const KernelMatrix& K, const Eigen::VectorXd& y,
                    double lambda, bool allow_pseudo = true) {
  const int n = K.n();
  if (y.size() != n) throw DimensionMismatch("fit: len(y) != n");
  if (lambda < 0.0) throw ConfigError("fit: lambda must be >= 0");
  RidgeFit out;
  out.lambda = lambda;
  out.y = y;

  Eigen::MatrixXd Kl = K.M;
  Kl.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(Kl);
  if (llt.info() == Eigen::Success) {
    out.alpha = llt.solve(y);
    // exact inverse diagonal: [K_lambda^{-1}]_ii = ||L^{-1} e_i||^2
    Eigen::MatrixXd Linv = Eigen::MatrixXd::Identity(n, n);
    llt.matrixL().solveInPlace(Linv);
    out.inv_diag = Linv.colwise().squaredNorm();
    out.solver = SolverPath::cholesky;
  } else {
    if (!allow_pseudo)
      throw SingularSystem("K + lambda Id is not positive definite");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Kl);
    const Eigen::VectorXd ev = es.eigenvalues();
    const double thresh = 1e-12 * ev.cwiseAbs().maxCoeff() * n;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i)
      if (ev(i) > thresh) inv(i) = 1.0 / ev(i);
    const Eigen::MatrixXd& V = es.eigenvectors();
    out.alpha = V * (inv.asDiagonal() * (V.transpose() * y));
    out.inv_diag = (V.array().square().matrix() * inv);
    out.solver = SolverPath::eigen_pseudo;
    out.pseudo_threshold = thresh;
  }
  out.fitted = K.M * out.alpha;
  return out;
}

// Predictions cross^T alpha for a cross-kernel block of shape n x m.
inline Eigen::VectorXd predict(const RidgeFit& fit_,
                               const Eigen::MatrixXd& cross) {
  if (cross.rows() != fit_.n())
    throw DimensionMismatch("predict: cross rows != n");
  return cross.transpose() * fit_.alpha;
}

// In-sample empirical risk (1/n) ||K alpha - y||^2, computed directly from
// the fitted values. Agrees with the closed form lambda^2 ||alpha||^2 / n.
inline double training_error(const RidgeFit& f) {
  return (f.fitted - f.y).squaredNorm() / static_cast<double>(f.n());
}

// Shortcut LOOCV (1/n) sum_i (alpha_i / [K_lambda^{-1}]_ii)^2, equal to the
// n-refit leave-one-out risk.
inline double loocv_shortcut(const RidgeFit& f) {
  double s = 0.0;
  for (int i = 0; i < f.n(); ++i) {
    if (!(f.inv_diag(i) > 1e-300))
      throw ZeroDiagonal("inverse diagonal entry " + std::to_string(i) +
                         " vanishes");
    const double r = f.alpha(i) / f.inv_diag(i);
    s += r * r;
  }
  return s / static_cast<double>(f.n());
}

// Reference LOOCV by n refits on the (n-1) x (n-1) principal submatrices.
// Oracle for loocv_shortcut. A held-out point with an empty training set
// (n = 1) predicts 0.
inline double loocv_naive(const KernelMatrix& K, const Eigen::VectorXd& y,
                          double lambda) {
  const int n = K.n();
  if (y.size() != n) throw DimensionMismatch("loocv_naive: len(y) != n");
  double s = 0.0;
  Eigen::MatrixXd sub(n - 1 > 0 ? n - 1 : 0, n - 1 > 0 ? n - 1 : 0);
  Eigen::VectorXd ysub(sub.rows()), ki(sub.rows());
  for (int i = 0; i < n; ++i) {
    double pred = 0.0;
    if (n > 1) {
      int r = 0;
      for (int a = 0; a < n; ++a) {
        if (a == i) continue;
        int c = 0;
        for (int b = 0; b < n; ++b) {
          if (b == i) continue;
          sub(r, c++) = K.M(a, b);
        }
        ysub(r) = y(a);
        ki(r) = K.M(i, a);
        ++r;
      }
      sub.diagonal().array() += lambda;
      Eigen::LLT<Eigen::MatrixXd> llt(sub);
      if (llt.info() != Eigen::Success)
        throw SingularSystem("loocv_naive: submatrix " + std::to_string(i) +
                             " is not positive definite");
      pred = ki.dot(llt.solve(ysub));
    }
    const double r = y(i) - pred;
    s += r * r;
  }
  return s / static_cast<double>(n);
}

// Generalized cross-validation E_train / (lambda * tr K_lambda^{-1})^2 with
// the normalized trace tr(A) = (1/n) sum A_ii. Undefined at lambda = 0
// (0/0), which is refused rather than redefined.
inline double gcv(const RidgeFit& f) {
  if (!(f.lambda > 0.0)) throw LambdaZero("GCV requires lambda > 0");
  const double tr = f.inv_diag.mean();
  const double denom = f.lambda * tr;
  return training_error(f) / (denom * denom);
}

}  // namespace rfconc
