#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rfconc/dataset.hpp"
#include "rfconc/errors.hpp"
#include "rfconc/kernel.hpp"
#include "rfconc/ridge.hpp"
#include "rfconc/teacher.hpp"

namespace rfconc {

enum class Metric { train, loocv, gcv, test, concentration };

inline const char* metric_name(Metric m) {
  switch (m) {
    case Metric::train: return "train";
    case Metric::loocv: return "loocv";
    case Metric::gcv: return "gcv";
    case Metric::test: return "test";
    case Metric::concentration: return "concentration";
  }
  return "?";
}

inline std::optional<Metric> parse_metric(const std::string& s) {
  if (s == "train") return Metric::train;
  if (s == "loocv") return Metric::loocv;
  if (s == "gcv") return Metric::gcv;
  if (s == "test") return Metric::test;
  if (s == "concentration") return Metric::concentration;
  return std::nullopt;
}

struct ExperimentConfig {
  // data
  std::string dist = "sphere";  // "sphere" | "cube" | "csv"
  std::string csv_path;
  std::optional<int> feature_subsample;
  int d = 0;
  int n = 0;
  // model
  ActivationSpec activation;
  ActivationSpec tau;
  double sigma_eps = 0.0;
  std::optional<int> ell;  // nullopt = auto via select_ell
  std::string baseline = "polynomial";  // "polynomial" | "expected"
  // grid
  std::vector<double> lambda_grid;
  std::vector<int> N_grid;
  int trials = 1;
  int B = 8;    // test-metric replicates per (N, trial)
  int M = 256;  // test points per replicate
  std::uint64_t root_seed = 0;
  std::vector<Metric> metrics;
};

struct SweepRow {
  Metric metric;
  double lambda = 0.0;
  int N = 0;
  int trial = 0;
  double rf_value = 0.0;
  double kernel_value = 0.0;
  double abs_diff = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::string kernel_baseline;  // "expected" or "polynomial(ell)"
  std::uint64_t config_hash = 0;
  std::uint64_t root_seed = 0;
  std::vector<std::string> warnings;
};

inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::string s = cfg.dist + '|' + cfg.csv_path + '|';
  auto add = [&s](const std::string& t) { s += t; s += '|'; };
  char buf[40];
  auto addf = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    add(buf);
  };
  add(std::to_string(cfg.d));
  add(std::to_string(cfg.n));
  if (cfg.feature_subsample) add(std::to_string(*cfg.feature_subsample));
  add(activation_name(cfg.activation));
  add(activation_name(cfg.tau));
  addf(cfg.sigma_eps);
  add(cfg.ell ? std::to_string(*cfg.ell) : "auto");
  add(cfg.baseline);
  for (double l : cfg.lambda_grid) addf(l);
  for (int N : cfg.N_grid) add(std::to_string(N));
  add(std::to_string(cfg.trials));
  add(std::to_string(cfg.B));
  add(std::to_string(cfg.M));
  add(std::to_string(cfg.root_seed));
  for (Metric m : cfg.metrics) add(metric_name(m));
  return detail::fnv1a(s);
}

namespace detail {

// Runs fn(0..count-1) on a small pool. Tasks write disjoint output slots, so
// scheduling cannot change results.
template <class Fn>
void parallel_for(int count, int threads, const Fn& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct TrialCache {
  Eigen::VectorXd y;                       // labels for train/loocv/gcv
  std::vector<double> kernel_train, kernel_loocv, kernel_gcv;  // per lambda
  std::vector<Eigen::VectorXd> rep_y;      // per replicate labels
  std::vector<Eigen::VectorXd> rep_truth;  // per replicate f*(Z_b)
  std::vector<double> kernel_test;         // per lambda, averaged over b
};

}  // namespace detail

// Seeded sweep over (metric, lambda, N, trial) comparing RFRR against the
// baseline kernel regression on one fixed dataset. W is redrawn per
// (trial, N); the teacher signal and noise are redrawn per trial (and per
// replicate for the test metric). Deterministic per root_seed regardless of
// the thread count.
inline SweepResult run_sweep(const ExperimentConfig& cfg, int threads = 1) {
  if (cfg.N_grid.empty() || cfg.lambda_grid.empty() || cfg.metrics.empty())
    throw ConfigError("run_sweep: empty N_grid, lambda_grid or metrics");
  for (std::size_t i = 1; i < cfg.N_grid.size(); ++i)
    if (cfg.N_grid[i] <= cfg.N_grid[i - 1])
      throw ConfigError("run_sweep: N_grid must be strictly increasing");
  if (cfg.trials < 1) throw ConfigError("run_sweep: trials must be >= 1");

  SweepResult result;
  result.root_seed = cfg.root_seed;
  result.config_hash = config_hash(cfg);

  // One fixed design X for the whole sweep.
  DataMatrix X;
  if (cfg.dist == "sphere")
    X = sample_sphere(cfg.d, cfg.n, substream(cfg.root_seed, "data"));
  else if (cfg.dist == "cube")
    X = sample_cube(cfg.d, cfg.n, substream(cfg.root_seed, "data"));
  else if (cfg.dist == "csv")
    X = load_csv(cfg.csv_path, cfg.feature_subsample,
                 substream(cfg.root_seed, "data"));
  else
    throw ConfigError("run_sweep: unknown dist '" + cfg.dist + "'");
  const int d = X.d();  // csv sources define d/n themselves

  const HermiteProfile hp = expand_activation(cfg.activation, 16, 1e-10);
  const HermiteProfile tau_hp = expand_activation(cfg.tau, 16, 1e-10);

  int ell = cfg.ell.value_or(-1);
  if (!cfg.ell) {
    OrthogonalityProfile prof = orthogonality_profile(X, 10);
    ell = select_ell(prof, hp);  // throws if no admissible ell
  }
  if (!teacher_compatible(hp, tau_hp, std::min(ell, tau_hp.k_max)))
    result.warnings.push_back(
        "teacher drops a Hermite component the activation carries "
        "(compatibility check failed); results remain valid data");

  KernelMatrix Kb;
  if (cfg.baseline == "expected") {
    Kb = expected_kernel(X, hp, 1e-12);
    result.kernel_baseline = "expected";
  } else if (cfg.baseline == "polynomial") {
    Kb = polynomial_kernel(X, hp, ell);
    result.kernel_baseline = "polynomial(" + std::to_string(ell) + ")";
  } else {
    throw ConfigError("run_sweep: unknown baseline '" + cfg.baseline + "'");
  }

  const bool want_test =
      std::find(cfg.metrics.begin(), cfg.metrics.end(), Metric::test) !=
      cfg.metrics.end();
  const int L = static_cast<int>(cfg.lambda_grid.size());

  // Phase A: per-trial labels and kernel-side values (independent of N).
  std::vector<detail::TrialCache> cache(cfg.trials);
  detail::parallel_for(cfg.trials, threads, [&](int t) {
    detail::TrialCache& tc = cache[t];
    const TeacherModel teacher = sample_teacher(
        cfg.tau, d, cfg.sigma_eps,
        substream(cfg.root_seed, "teacher", static_cast<std::uint64_t>(t)));
    tc.y = labels(teacher, X,
                  substream(cfg.root_seed, "noise", static_cast<std::uint64_t>(t)));
    tc.kernel_train.resize(L);
    tc.kernel_loocv.resize(L);
    tc.kernel_gcv.resize(L);
    for (int l = 0; l < L; ++l) {
      const RidgeFit f = fit(Kb, tc.y, cfg.lambda_grid[l]);
      tc.kernel_train[l] = training_error(f);
      tc.kernel_loocv[l] = loocv_shortcut(f);
      tc.kernel_gcv[l] = cfg.lambda_grid[l] > 0.0 ? gcv(f) : 0.0;
    }
    if (!want_test) return;
    tc.rep_y.resize(cfg.B);
    tc.rep_truth.resize(cfg.B);
    tc.kernel_test.assign(L, 0.0);
    const CrossMode mode = cfg.baseline == "polynomial"
                               ? CrossMode::truncated(ell)
                               : CrossMode::full(1e-12);
    for (int b = 0; b < cfg.B; ++b) {
      const TeacherModel rep_teacher = sample_teacher(
          cfg.tau, d, cfg.sigma_eps,
          substream(cfg.root_seed, "rep_teacher", t, static_cast<std::uint64_t>(b)));
      tc.rep_y[b] = labels(
          rep_teacher, X,
          substream(cfg.root_seed, "rep_noise", t, static_cast<std::uint64_t>(b)));
      const Eigen::MatrixXd Z =
          sample_sphere(d, cfg.M,
                        substream(cfg.root_seed, "rep_test", t,
                                  static_cast<std::uint64_t>(b)))
              .X;
      Eigen::VectorXd truth = Z.transpose() * rep_teacher.beta;
      for (int i = 0; i < truth.size(); ++i) truth(i) = rep_teacher.tau(truth(i));
      tc.rep_truth[b] = std::move(truth);
      const Eigen::MatrixXd crossK = cross_kernel_expected(X, Z, hp, mode);
      for (int l = 0; l < L; ++l) {
        const RidgeFit f = fit(Kb, tc.rep_y[b], cfg.lambda_grid[l]);
        const Eigen::VectorXd pred = predict(f, crossK);
        tc.kernel_test[l] += (pred - tc.rep_truth[b]).squaredNorm() /
                             static_cast<double>(cfg.M) / cfg.B;
      }
    }
  });

  // Preallocated row slots: (metric, lambda, N, trial) -> flat index.
  const int NN = static_cast<int>(cfg.N_grid.size());
  const int MM = static_cast<int>(cfg.metrics.size());
  result.rows.assign(static_cast<std::size_t>(MM) * L * NN * cfg.trials, {});
  auto slot = [&](int m, int l, int nidx, int t) -> SweepRow& {
    return result.rows[((static_cast<std::size_t>(m) * L + l) * NN + nidx) *
                           cfg.trials +
                       t];
  };

  // Phase B: random-feature side, one streamed W pass per (trial, N).
  detail::parallel_for(cfg.trials * NN, threads, [&](int task) {
    const int t = task / NN;
    const int nidx = task % NN;
    const int N = cfg.N_grid[nidx];
    const detail::TrialCache& tc = cache[t];
    double current_lambda = cfg.lambda_grid[0];
    const char* current_metric = "setup";
    try {
      Eigen::MatrixXd Z_all(X.d(), 0);
      if (want_test) {
        Z_all.resize(X.d(), static_cast<Eigen::Index>(cfg.B) * cfg.M);
        for (int b = 0; b < cfg.B; ++b)
          Z_all.middleCols(static_cast<Eigen::Index>(b) * cfg.M, cfg.M) =
              sample_sphere(d, cfg.M,
                            substream(cfg.root_seed, "rep_test", t,
                                      static_cast<std::uint64_t>(b)))
                  .X;
      }
      const std::uint64_t wseed =
          substream(cfg.root_seed, "w", t, static_cast<std::uint64_t>(N));
      auto [K_N, crossN] =
          empirical_ck_streamed(N, wseed, cfg.activation, X, Z_all);

      for (int l = 0; l < L; ++l) {
        const double lambda = cfg.lambda_grid[l];
        current_lambda = lambda;
        const RidgeFit f = fit(K_N, tc.y, lambda);
        for (int m = 0; m < MM; ++m) {
          current_metric = metric_name(cfg.metrics[m]);
          SweepRow& row = slot(m, l, nidx, t);
          row.metric = cfg.metrics[m];
          row.lambda = lambda;
          row.N = N;
          row.trial = t;
          switch (cfg.metrics[m]) {
            case Metric::train:
              row.rf_value = training_error(f);
              row.kernel_value = tc.kernel_train[l];
              break;
            case Metric::loocv:
              row.rf_value = loocv_shortcut(f);
              row.kernel_value = tc.kernel_loocv[l];
              break;
            case Metric::gcv:
              row.rf_value = gcv(f);
              row.kernel_value = tc.kernel_gcv[l];
              break;
            case Metric::test: {
              double mse = 0.0;
              for (int b = 0; b < cfg.B; ++b) {
                const RidgeFit fb = fit(K_N, tc.rep_y[b], lambda);
                const Eigen::VectorXd pred = predict(
                    fb, crossN.middleCols(static_cast<Eigen::Index>(b) * cfg.M,
                                          cfg.M));
                mse += (pred - tc.rep_truth[b]).squaredNorm() /
                       static_cast<double>(cfg.M) / cfg.B;
              }
              row.rf_value = mse;
              row.kernel_value = tc.kernel_test[l];
              break;
            }
            case Metric::concentration:
              row.rf_value = normalized_concentration(Kb, K_N, lambda);
              row.kernel_value = 0.0;
              break;
          }
          row.abs_diff = std::abs(row.rf_value - row.kernel_value);
        }
      }

      // Shortcut vs. naive LOOCV cross-check, once per sweep at the
      // smallest N of the grid.
      if (t == 0 && nidx == 0) {
        const RidgeFit f0 = fit(K_N, tc.y, cfg.lambda_grid[0]);
        const double shortcut = loocv_shortcut(f0);
        const double naive = loocv_naive(K_N, tc.y, cfg.lambda_grid[0]);
        const double rel =
            std::abs(shortcut - naive) / std::max(std::abs(naive), 1e-30);
        if (rel > 1e-8)
          throw Error("LOOCV shortcut/naive cross-check failed: rel diff " +
                      std::to_string(rel));
      }
    } catch (const Error& e) {
      throw Error("sweep cell (metric=" + std::string(current_metric) +
                  ", lambda=" + std::to_string(current_lambda) +
                  ", N=" + std::to_string(N) +
                  ", trial=" + std::to_string(t) + "): " + e.what());
    }
  });
  return result;
}

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
};

// OLS of log(mean over trials of abs_diff) against log N for one
// (metric, lambda) series. Zero means are dropped with a warning.
inline SlopeFit fit_slope(const SweepResult& result, Metric metric,
                          double lambda) {
  std::vector<int> Ns;
  std::vector<double> sums;
  std::vector<int> counts;
  for (const SweepRow& row : result.rows) {
    if (row.metric != metric || row.lambda != lambda) continue;
    auto it = std::find(Ns.begin(), Ns.end(), row.N);
    if (it == Ns.end()) {
      Ns.push_back(row.N);
      sums.push_back(row.abs_diff);
      counts.push_back(1);
    } else {
      const std::size_t i = static_cast<std::size_t>(it - Ns.begin());
      sums[i] += row.abs_diff;
      counts[i] += 1;
    }
  }
  std::vector<double> lx, ly;
  bool dropped = false;
  for (std::size_t i = 0; i < Ns.size(); ++i) {
    const double mean = sums[i] / counts[i];
    if (!(mean > 0.0)) {
      std::cerr << "fit_slope: dropping N=" << Ns[i]
                << " (mean abs_diff underflowed to 0)\n";
      dropped = true;
      continue;
    }
    lx.push_back(std::log(static_cast<double>(Ns[i])));
    ly.push_back(std::log(mean));
  }
  if (lx.size() < 3) {
    if (dropped)
      throw NonPositiveDiff(
          "fewer than 3 positive mean differences remain after dropping "
          "underflowed N values");
    throw InsufficientData(
        "fit_slope needs >= 3 distinct N values with positive mean abs_diff");
  }
  const double n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  SlopeFit out;
  out.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  out.intercept = (sy - out.slope * sx) / n;
  return out;
}

// CSV contract: fixed header, rows sorted by (metric, lambda, N, trial),
// '.'-decimal with 17 significant digits. Reruns are byte-identical.
inline void emit_csv(const SweepResult& result, const std::string& path) {
  std::vector<SweepRow> rows = result.rows;
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    const int c = std::strcmp(metric_name(a.metric), metric_name(b.metric));
    if (c != 0) return c < 0;
    if (a.lambda != b.lambda) return a.lambda < b.lambda;
    if (a.N != b.N) return a.N < b.N;
    return a.trial < b.trial;
  });
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "metric,lambda,N,trial,rf_value,kernel_value,abs_diff\n";
  char buf[128];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%d,%d,%.17g,%.17g,%.17g",
                  metric_name(r.metric), r.lambda, r.N, r.trial, r.rf_value,
                  r.kernel_value, r.abs_diff);
    out << buf << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

// Reads a sweep CSV back (used by the report subcommand).
inline SweepResult parse_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) ||
      line != "metric,lambda,N,trial,rf_value,kernel_value,abs_diff")
    throw ParseError(path + ": missing or unexpected sweep CSV header");
  SweepResult result;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t end = line.find(',', start);
      if (end == std::string::npos) end = line.size();
      cells.push_back(line.substr(start, end - start));
      start = end + 1;
      if (end == line.size()) break;
    }
    if (cells.size() != 7)
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected 7 cells");
    const std::optional<Metric> m = parse_metric(cells[0]);
    if (!m)
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": unknown metric '" + cells[0] + "'");
    try {
      SweepRow row;
      row.metric = *m;
      row.lambda = std::stod(cells[1]);
      row.N = std::stoi(cells[2]);
      row.trial = std::stoi(cells[3]);
      row.rf_value = std::stod(cells[4]);
      row.kernel_value = std::stod(cells[5]);
      row.abs_diff = std::stod(cells[6]);
      result.rows.push_back(row);
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": non-numeric cell");
    }
  }
  return result;
}

}  // namespace rfconc
