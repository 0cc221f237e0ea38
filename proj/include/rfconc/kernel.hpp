#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rfconc/dataset.hpp"
#include "rfconc/errors.hpp"
#include "rfconc/hermite.hpp"
#include "rfconc/rng.hpp"

namespace rfconc {

enum class KernelProvenance { empirical, expected, polynomial };

// Symmetric PSD n x n Gram matrix with provenance. Immutable after
// construction; symmetry is exact by construction.
struct KernelMatrix {
  Eigen::MatrixXd M;
  KernelProvenance provenance = KernelProvenance::expected;
  int N = 0;                // empirical: feature count
  std::uint64_t seed = 0;   // empirical: weight seed
  int order = -1;           // expected: series cutoff K*; polynomial: ell
  HermiteProfile profile;   // activation profile (empty for empirical maps)

  int n() const { return static_cast<int>(M.rows()); }
};

// Random first-layer weights, N x d with i.i.d. standard normal entries.
// Row i comes from its own substream, so a streamed pass over row blocks
// produces the same matrix as materializing W up front.
struct RandomFeatureMap {
  Eigen::MatrixXd W;  // N x d
  int N = 0;
  std::uint64_t seed = 0;
  ActivationSpec act;
};

namespace detail {

inline void fill_weight_rows(Eigen::Ref<Eigen::MatrixXd> block,
                             std::uint64_t seed, int first_row) {
  for (int r = 0; r < block.rows(); ++r) {
    CounterRng rng(substream(seed, "w_row",
                             static_cast<std::uint64_t>(first_row + r)));
    for (int c = 0; c < block.cols(); ++c) block(r, c) = rng.next_gaussian();
  }
}

// Elementwise activation on a dense block; hermite_poly goes through the
// monomial form once per call instead of the per-element recurrence.
inline void apply_activation_inplace(const ActivationSpec& act,
                                     Eigen::Ref<Eigen::MatrixXd> m) {
  if (act.kind == ActKind::hermite_poly) {
    const std::vector<double> mono = hermite_to_monomial(act.coeffs);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double* col = m.col(j).data();
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double x = col[i];
        double acc = mono.back();
        for (std::size_t k = mono.size() - 1; k-- > 0;) acc = acc * x + mono[k];
        col[i] = acc;
      }
    }
    return;
  }
  m = m.unaryExpr([&act](double x) { return act(x); });
}

}  // namespace detail

inline RandomFeatureMap make_feature_map(int N, int d, std::uint64_t seed,
                                         ActivationSpec act) {
  if (N < 1 || d < 1) throw ConfigError("feature map needs N >= 1 and d >= 1");
  RandomFeatureMap fm;
  fm.N = N;
  fm.seed = seed;
  fm.act = std::move(act);
  fm.W.resize(N, d);
  detail::fill_weight_rows(fm.W, seed, 0);
  return fm;
}

constexpr int kFeatureBlockRows = 1024;

// Empirical conjugate kernel K_N = sigma(W X)^T sigma(W X) / N together with
// the cross kernel to extra points Z, computed in one streamed pass over row
// blocks of W. W itself is never materialized, so N can be large. The cross
// kernel may be threaded over disjoint column chunks of Z; every chunk still
// accumulates in fixed block order, so the result is thread-count
// independent.
inline std::pair<KernelMatrix, Eigen::MatrixXd> empirical_ck_streamed(
    int N, std::uint64_t seed, const ActivationSpec& act, const DataMatrix& X,
    const Eigen::MatrixXd& Z, int block_rows = kFeatureBlockRows,
    int threads = 1) {
  if (N < 1) throw ConfigError("empirical_ck: N must be >= 1");
  if (Z.size() > 0 && Z.rows() != X.d())
    throw DimensionMismatch("Z row count does not match data dimension");
  const int n = X.n();
  const int m = static_cast<int>(Z.cols());
  const int chunks = std::max(1, std::min(threads, (m + 255) / 256));
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(n, m);
  Eigen::MatrixXd wblock, phi;
  std::vector<Eigen::MatrixXd> phiz(chunks);
  for (int row = 0; row < N; row += block_rows) {
    const int h = std::min(block_rows, N - row);
    wblock.resize(h, X.d());
    detail::fill_weight_rows(wblock, seed, row);
    phi.noalias() = wblock * X.X;
    detail::apply_activation_inplace(act, phi);
    acc.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
    if (m > 0) {
      auto chunk_job = [&](int ci) {
        const int c0 = static_cast<int>(static_cast<long long>(m) * ci / chunks);
        const int c1 =
            static_cast<int>(static_cast<long long>(m) * (ci + 1) / chunks);
        if (c0 >= c1) return;
        phiz[ci].noalias() = wblock * Z.middleCols(c0, c1 - c0);
        detail::apply_activation_inplace(act, phiz[ci]);
        cross.middleCols(c0, c1 - c0).noalias() += phi.transpose() * phiz[ci];
      };
      if (chunks == 1) {
        chunk_job(0);
      } else {
        std::vector<std::thread> pool;
        pool.reserve(chunks);
        for (int ci = 0; ci < chunks; ++ci) pool.emplace_back(chunk_job, ci);
        for (auto& t : pool) t.join();
      }
    }
  }
  KernelMatrix K;
  K.M = acc.selfadjointView<Eigen::Lower>();
  K.M /= static_cast<double>(N);
  K.provenance = KernelProvenance::empirical;
  K.N = N;
  K.seed = seed;
  cross /= static_cast<double>(N);
  return {std::move(K), std::move(cross)};
}

inline KernelMatrix empirical_ck(const RandomFeatureMap& fm,
                                 const DataMatrix& X) {
  if (fm.W.cols() != X.d())
    throw DimensionMismatch("feature map dimension does not match data");
  const int n = X.n();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd phi;
  for (int row = 0; row < fm.N; row += kFeatureBlockRows) {
    const int h = std::min(kFeatureBlockRows, fm.N - row);
    phi.noalias() = fm.W.middleRows(row, h) * X.X;
    detail::apply_activation_inplace(fm.act, phi);
    acc.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
  }
  KernelMatrix K;
  K.M = acc.selfadjointView<Eigen::Lower>();
  K.M /= static_cast<double>(fm.N);
  K.provenance = KernelProvenance::empirical;
  K.N = fm.N;
  K.seed = fm.seed;
  return K;
}

// K_N(x, z) = sigma(W x)^T sigma(W z) / N for all pairs of columns.
inline Eigen::MatrixXd cross_kernel_empirical(const RandomFeatureMap& fm,
                                              const DataMatrix& X,
                                              const Eigen::MatrixXd& Z) {
  if (fm.W.cols() != X.d() || Z.rows() != X.d())
    throw DimensionMismatch("cross kernel dimension mismatch");
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(X.n(), Z.cols());
  Eigen::MatrixXd phi, phiz;
  for (int row = 0; row < fm.N; row += kFeatureBlockRows) {
    const int h = std::min(kFeatureBlockRows, fm.N - row);
    phi.noalias() = fm.W.middleRows(row, h) * X.X;
    detail::apply_activation_inplace(fm.act, phi);
    phiz.noalias() = fm.W.middleRows(row, h) * Z;
    detail::apply_activation_inplace(fm.act, phiz);
    cross.noalias() += phi.transpose() * phiz;
  }
  return cross / static_cast<double>(fm.N);
}

namespace detail {

// Entrywise sum_{k<=K} zeta_k^2 rho^k over a matrix of inner products.
inline Eigen::MatrixXd hermite_series(const Eigen::MatrixXd& R,
                                      const HermiteProfile& hp, int K) {
  Eigen::ArrayXXd pw = Eigen::ArrayXXd::Ones(R.rows(), R.cols());
  Eigen::ArrayXXd acc =
      Eigen::ArrayXXd::Constant(R.rows(), R.cols(), hp.coeffs[0] * hp.coeffs[0]);
  for (int k = 1; k <= K; ++k) {
    pw *= R.array();
    acc += (hp.coeffs[k] * hp.coeffs[k]) * pw;
  }
  return acc.matrix();
}

// Smallest cutoff K with sigma_{>K}^2 * eps^{K+1} < tol (entrywise tail
// bound of the power series); exact at the polynomial degree for polynomial
// activations.
inline int truncation_order(const HermiteProfile& hp, double eps, double tol) {
  for (int K = 0; K <= hp.k_max; ++K) {
    if (tail_mass(hp, K) * std::pow(eps, K + 1) < tol) return K;
  }
  if (profile_is_polynomial(hp)) return hp.k_max;
  throw TailNotConvergent(
      "series tail cannot meet tol within k_max = " + std::to_string(hp.k_max) +
      " (eps = " + std::to_string(eps) + "); expand with a larger k_max");
}

constexpr double kCoincidentRho = 1.0 - 1e-12;

}  // namespace detail

// Expected kernel K = sum_k zeta_k^2 (X^T X)^{.k}, truncated per the
// entrywise tail bound; the diagonal is set to ||sigma||_2^2 exactly.
inline KernelMatrix expected_kernel(const DataMatrix& X,
                                    const HermiteProfile& hp,
                                    double tol = 1e-12) {
  const Eigen::MatrixXd G = gram_matrix(X.X);
  const int n = X.n();
  double eps = 0.0;
  for (int j = 0; j < n; ++j)
    for (int i = j + 1; i < n; ++i) eps = std::max(eps, std::abs(G(i, j)));
  if (eps >= detail::kCoincidentRho && !profile_is_polynomial(hp))
    throw TailNotConvergent(
        "duplicate columns with an infinite Hermite expansion: no finite "
        "truncation meets tol");
  const int K = detail::truncation_order(hp, eps, tol);
  KernelMatrix out;
  out.M = detail::hermite_series(G, hp, K);
  out.M.diagonal().setConstant(hp.l2_norm_sq);
  out.provenance = KernelProvenance::expected;
  out.order = K;
  out.profile = hp;
  return out;
}

// Degree-ell polynomial kernel K_ell = sum_{k<=ell} zeta_k^2 (X^T X)^{.k}
// + sigma_{>ell}^2 Id. Exact finite formula; diagonal is ||sigma||_2^2.
inline KernelMatrix polynomial_kernel(const DataMatrix& X,
                                      const HermiteProfile& hp, int ell) {
  if (ell < 0 || ell > hp.k_max)
    throw ConfigError("polynomial_kernel: ell must be in [0, k_max]");
  const Eigen::MatrixXd G = gram_matrix(X.X);
  KernelMatrix out;
  out.M = detail::hermite_series(G, hp, ell);
  out.M.diagonal().setConstant(hp.l2_norm_sq);
  out.provenance = KernelProvenance::polynomial;
  out.order = ell;
  out.profile = hp;
  return out;
}

struct CrossMode {
  bool poly = false;
  int ell = 0;
  double tol = 1e-12;

  static CrossMode full(double tol = 1e-12) { return {false, 0, tol}; }
  static CrossMode truncated(int ell) { return {true, ell, 0.0}; }
};

// Expected (or degree-ell) kernel between training columns and fresh points:
// the series applied entrywise to X^T Z; coincident points take the value
// ||sigma||_2^2 directly.
inline Eigen::MatrixXd cross_kernel_expected(const DataMatrix& X,
                                             const Eigen::MatrixXd& Z,
                                             const HermiteProfile& hp,
                                             const CrossMode& mode) {
  if (Z.rows() != X.d())
    throw DimensionMismatch("cross kernel dimension mismatch");
  const Eigen::MatrixXd R = X.X.transpose() * Z;
  int K = mode.ell;
  if (!mode.poly) {
    double eps = 0.0;
    for (Eigen::Index j = 0; j < R.cols(); ++j) {
      for (Eigen::Index i = 0; i < R.rows(); ++i) {
        const double rho = R(i, j);
        if (rho >= detail::kCoincidentRho) continue;  // coincident case split
        if (rho <= -detail::kCoincidentRho && !profile_is_polynomial(hp))
          throw TailNotConvergent(
              "rho = -1 between distinct points: series converges too slowly "
              "to truncate");
        eps = std::max(eps, std::abs(rho));
      }
    }
    K = detail::truncation_order(hp, eps, mode.tol);
  }
  Eigen::MatrixXd out = detail::hermite_series(R, hp, K);
  for (Eigen::Index j = 0; j < R.cols(); ++j)
    for (Eigen::Index i = 0; i < R.rows(); ++i)
      if (R(i, j) >= detail::kCoincidentRho) out(i, j) = hp.l2_norm_sq;
  return out;
}

inline double min_eigenvalue(const KernelMatrix& K) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      K.M, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

// ||K_lambda^{-1/2} (K_N - K) K_lambda^{-1/2}|| via one symmetric
// eigendecomposition for the square root and one for the transformed
// difference.
inline double normalized_concentration(const KernelMatrix& K,
                                       const KernelMatrix& K_N, double lambda) {
  if (K.n() != K_N.n())
    throw DimensionMismatch("kernel shapes differ");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K.M);
  const Eigen::VectorXd ev = es.eigenvalues();
  if (ev(0) + lambda <= 1e-12)
    throw NotPositiveDefinite("K + lambda Id is not positive definite");
  const Eigen::VectorXd inv_sqrt =
      (ev.array() + lambda).rsqrt().matrix();
  const Eigen::MatrixXd S =
      es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
  Eigen::MatrixXd A = S * (K_N.M - K.M) * S;
  A = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(A, Eigen::EigenvaluesOnly);
  return ea.eigenvalues().cwiseAbs().maxCoeff();
}

// --- binary kernel cache ----------------------------------------------------
// Layout: magic "RFCK1", n as 64-bit little-endian, n^2 doubles (row-major,
// little-endian), then a provenance JSON trailer.

static_assert(std::endian::native == std::endian::little,
              "kernel cache assumes a little-endian host");

inline void save_kernel(const KernelMatrix& K, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write("RFCK1", 5);
  const std::uint64_t n = static_cast<std::uint64_t>(K.n());
  out.write(reinterpret_cast<const char*>(&n), 8);
  std::vector<double> row(K.n());
  for (int i = 0; i < K.n(); ++i) {
    for (int j = 0; j < K.n(); ++j) row[j] = K.M(i, j);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  nlohmann::json trailer;
  switch (K.provenance) {
    case KernelProvenance::empirical:
      trailer["provenance"] = "empirical";
      trailer["N"] = K.N;
      trailer["seed"] = K.seed;
      break;
    case KernelProvenance::expected:
      trailer["provenance"] = "expected";
      trailer["k_max"] = K.order;
      break;
    case KernelProvenance::polynomial:
      trailer["provenance"] = "polynomial";
      trailer["ell"] = K.order;
      break;
  }
  const std::string t = trailer.dump();
  out.write(t.data(), static_cast<std::streamsize>(t.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline KernelMatrix load_kernel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, "RFCK1", 5) != 0)
    throw ParseError("'" + path + "' is not an RFCK1 kernel cache");
  std::uint64_t n64 = 0;
  in.read(reinterpret_cast<char*>(&n64), 8);
  if (!in || n64 == 0 || n64 > (1u << 20))
    throw ParseError("'" + path + "': implausible kernel size");
  const int n = static_cast<int>(n64);
  KernelMatrix K;
  K.M.resize(n, n);
  std::vector<double> row(n);
  for (int i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(double)));
    if (!in) throw ParseError("'" + path + "': truncated kernel payload");
    for (int j = 0; j < n; ++j) K.M(i, j) = row[j];
  }
  std::string rest((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  try {
    const nlohmann::json trailer = nlohmann::json::parse(rest);
    const std::string prov = trailer.at("provenance").get<std::string>();
    if (prov == "empirical") {
      K.provenance = KernelProvenance::empirical;
      K.N = trailer.value("N", 0);
      K.seed = trailer.value("seed", std::uint64_t{0});
    } else if (prov == "expected") {
      K.provenance = KernelProvenance::expected;
      K.order = trailer.value("k_max", -1);
    } else if (prov == "polynomial") {
      K.provenance = KernelProvenance::polynomial;
      K.order = trailer.value("ell", -1);
    } else {
      throw ParseError("'" + path + "': unknown provenance '" + prov + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("'" + path + "': bad provenance trailer: " + e.what());
  }
  return K;
}

}  // namespace rfconc
