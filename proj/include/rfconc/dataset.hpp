#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "rfconc/errors.hpp"
#include "rfconc/hermite.hpp"
#include "rfconc/rng.hpp"

namespace rfconc {

enum class DataSource { sphere, cube, csv };

// d x n matrix of unit-norm sample columns. Immutable after construction.
struct DataMatrix {
  Eigen::MatrixXd X;  // columns are samples
  DataSource source = DataSource::sphere;
  std::optional<std::uint64_t> seed;
  std::string path;  // csv source only

  int d() const { return static_cast<int>(X.rows()); }
  int n() const { return static_cast<int>(X.cols()); }
};

// n i.i.d. uniform points on the unit sphere: standard Gaussian columns
// normalized to unit length. Column j draws from its own substream, so the
// matrix is reproducible per seed independent of generation order.
inline DataMatrix sample_sphere(int d, int n, std::uint64_t seed) {
  if (d < 1 || n < 1) throw ConfigError("sample_sphere: d and n must be >= 1");
  DataMatrix out;
  out.X.resize(d, n);
  out.source = DataSource::sphere;
  out.seed = seed;
  for (int j = 0; j < n; ++j) {
    CounterRng rng(substream(seed, "sphere_col", static_cast<std::uint64_t>(j)));
    double norm = 0.0;
    for (int attempt = 0; attempt <= 8; ++attempt) {
      for (int i = 0; i < d; ++i) out.X(i, j) = rng.next_gaussian();
      norm = out.X.col(j).norm();
      if (norm >= 1e-300) break;
    }
    if (norm < 1e-300)
      throw DegenerateDraw("sample_sphere: degenerate Gaussian column " +
                           std::to_string(j));
    out.X.col(j) /= norm;
  }
  return out;
}

// Columns with i.i.d. entries +-1/sqrt(d), exact unit norm.
inline DataMatrix sample_cube(int d, int n, std::uint64_t seed) {
  if (d < 1 || n < 1) throw ConfigError("sample_cube: d and n must be >= 1");
  DataMatrix out;
  out.X.resize(d, n);
  out.source = DataSource::cube;
  out.seed = seed;
  const double v = 1.0 / std::sqrt(static_cast<double>(d));
  for (int j = 0; j < n; ++j) {
    CounterRng rng(substream(seed, "cube_col", static_cast<std::uint64_t>(j)));
    for (int i = 0; i < d; ++i)
      out.X(i, j) = (rng.next_u64() >> 63) ? v : -v;
  }
  return out;
}

// Writes samples as CSV rows (n rows x d columns), '.'-decimal, no header,
// 17 significant digits so a reload is exact.
inline void write_samples_csv(const DataMatrix& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  char buf[40];
  for (int j = 0; j < data.n(); ++j) {
    for (int i = 0; i < data.d(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.X(i, j));
      if (i) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

// Loads a CSV of samples (rows = samples, columns = features), optionally
// keeps a seeded uniform subset of the features, transposes to the d x n
// column layout and normalizes every sample to unit norm.
inline DataMatrix load_csv(const std::string& path,
                           std::optional<int> feature_subsample,
                           std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t end = line.find(',', start);
      if (end == std::string::npos) end = line.size();
      const std::string cell = line.substr(start, end - start);
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(cell, &pos));
        while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
        if (pos != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": non-numeric cell '" + cell + "'");
      }
      start = end + 1;
      if (end == line.size()) break;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": ragged row (got " + std::to_string(row.size()) +
                       " cells, expected " +
                       std::to_string(rows.front().size()) + ")");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path + ": empty file");

  const int n = static_cast<int>(rows.size());
  const int total_features = static_cast<int>(rows.front().size());
  std::vector<int> keep(total_features);
  for (int i = 0; i < total_features; ++i) keep[i] = i;
  if (feature_subsample && *feature_subsample < total_features) {
    // Seeded partial Fisher-Yates, then ascending order (a set of features).
    CounterRng rng(substream(seed, "feature_subsample"));
    const int m = *feature_subsample;
    if (m < 1) throw ConfigError("feature_subsample must be >= 1");
    for (int i = 0; i < m; ++i) {
      const int j = i + static_cast<int>(rng.next_u64() %
                                         static_cast<std::uint64_t>(total_features - i));
      std::swap(keep[i], keep[j]);
    }
    keep.resize(m);
    std::sort(keep.begin(), keep.end());
  }

  DataMatrix out;
  out.source = DataSource::csv;
  out.seed = seed;
  out.path = path;
  const int d = static_cast<int>(keep.size());
  out.X.resize(d, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < d; ++i) out.X(i, j) = rows[j][keep[i]];
    const double norm = out.X.col(j).norm();
    if (norm < 1e-12)
      throw ZeroNormSample("sample row " + std::to_string(j + 1) +
                           " has norm < 1e-12 and cannot be normalized");
    out.X.col(j) /= norm;
  }
  return out;
}

// epsilon_n and the Hadamard-power Gram deviations Delta_ell for ell = 0..L.
struct OrthogonalityProfile {
  double eps_n = 0.0;           // max_{i!=j} |<x_i, x_j>|
  std::vector<double> deltas;   // Delta_ell = ||(X^T X)^{.(ell+1)} - Id||_F
  std::optional<int> chosen_ell;
  bool angle_ok = false;        // eps_n <= 1/sqrt(2)
  bool cond13_ok = false;       // Delta_ell <= sigma_{>ell}^2 / (4 ||sigma||_4^2)
};

// X^T X with exact symmetry (lower triangle computed once, then mirrored).
inline Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& X) {
  const int n = static_cast<int>(X.cols());
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  L.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
  Eigen::MatrixXd G = L.selfadjointView<Eigen::Lower>();
  return G;
}

// One Gram computation, then entrywise powers of the off-diagonal. The
// diagonal of every Hadamard power is exactly 1 for unit columns, so only
// off-diagonal terms contribute to Delta_ell.
inline OrthogonalityProfile orthogonality_profile(const DataMatrix& data,
                                                  int L_max) {
  if (L_max < 0) throw ConfigError("orthogonality_profile: L_max must be >= 0");
  const int n = data.n();
  const Eigen::MatrixXd G = gram_matrix(data.X);

  OrthogonalityProfile p;
  p.deltas.assign(L_max + 1, 0.0);
  double eps = 0.0;
  for (int j = 0; j < n; ++j) {
    for (int i = j + 1; i < n; ++i) {
      const double rho = G(i, j);
      eps = std::max(eps, std::abs(rho));
      double pw = rho * rho;  // rho^{2(ell+1)} for ell = 0
      for (int ell = 0; ell <= L_max; ++ell) {
        p.deltas[ell] += 2.0 * pw;
        pw *= rho * rho;
      }
    }
  }
  for (double& v : p.deltas) v = std::sqrt(v);
  p.eps_n = eps;
  p.angle_ok = eps <= 1.0 / std::sqrt(2.0);
  return p;
}

constexpr double kMaxAngle = 0.70710678118654752440;  // 1/sqrt(2)

inline double condition13_threshold(const HermiteProfile& hp, int ell) {
  return tail_mass(hp, ell) / (4.0 * hp.l4_norm_sq());
}

// Smallest ell with Delta_ell <= sigma_{>ell}^2 / (4 ||sigma||_4^2) and
// sigma_{>ell}^2 > 0. Updates the profile's flags.
inline int select_ell(OrthogonalityProfile& profile, const HermiteProfile& hp) {
  if (profile.eps_n > kMaxAngle)
    throw AngleTooLarge("eps_n = " + std::to_string(profile.eps_n) +
                        " exceeds 1/sqrt(2)");
  profile.angle_ok = true;
  const int limit = std::min(static_cast<int>(profile.deltas.size()) - 1,
                             hp.k_max);
  for (int ell = 0; ell <= limit; ++ell) {
    const double tail = tail_mass(hp, ell);
    if (tail <= 0.0) continue;
    if (profile.deltas[ell] <= condition13_threshold(hp, ell)) {
      profile.chosen_ell = ell;
      profile.cond13_ok = true;
      return ell;
    }
  }
  profile.cond13_ok = false;
  throw NoAdmissibleEll("no ell <= " + std::to_string(limit) +
                        " satisfies the truncation condition");
}

struct TestPointProfile {
  double tail_norm = 0.0;  // ||(X^T x)^{.(ell+1)}||_2
  bool angle_ok = false;   // max_i |<x, x_i>| <= 1/sqrt(2)
  bool cond34_ok = false;  // tail_norm <= sigma_{>ell}^2 / (4 ||sigma||_4^2)
};

inline TestPointProfile test_point_profile(const DataMatrix& data,
                                           const Eigen::VectorXd& x, int ell,
                                           const HermiteProfile& hp) {
  if (x.size() != data.d())
    throw DimensionMismatch("test point dimension mismatch");
  if (std::abs(x.norm() - 1.0) > 1e-10)
    throw NotUnitNorm("test point norm deviates from 1 by more than 1e-10");
  const Eigen::VectorXd g = data.X.transpose() * x;
  TestPointProfile p;
  p.angle_ok = g.cwiseAbs().maxCoeff() <= kMaxAngle;
  double s = 0.0;
  for (int i = 0; i < g.size(); ++i)
    s += std::pow(g(i) * g(i), ell + 1);
  p.tail_norm = std::sqrt(s);
  p.cond34_ok = p.tail_norm <= condition13_threshold(hp, ell);
  return p;
}

}  // namespace rfconc
