#pragma once

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "rfconc/config.hpp"
#include "rfconc/experiment.hpp"

namespace rfconc {
namespace cli {

namespace detail {

inline std::string fmt(double v, const char* spec = "%.12g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

inline int default_threads() {
  if (const char* env = std::getenv("RFCONC_THREADS")) {
    try {
      const int t = std::stoi(env);
      if (t >= 1) return t;
    } catch (const std::exception&) {
    }
    std::cerr << "ignoring non-numeric RFCONC_THREADS\n";
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

inline int run_gen(const std::string& dist, int d, int n, std::uint64_t seed,
                   const std::string& out_path) {
  DataMatrix X;
  if (dist == "sphere")
    X = sample_sphere(d, n, seed);
  else if (dist == "cube")
    X = sample_cube(d, n, seed);
  else
    throw ConfigError("--dist must be sphere or cube");
  write_samples_csv(X, out_path);
  std::cerr << "wrote " << n << " samples of dimension " << d << " to "
            << out_path << "\n";
  return 0;
}

inline int run_hermite(const std::string& act_name, int max_degree, double tol,
                       const std::string& format) {
  const ActivationSpec act = parse_activation(act_name);
  const HermiteProfile hp = expand_activation(act, max_degree, tol);
  double cum = 0.0;
  if (format == "csv") {
    std::printf("k,zeta,cum_zeta_sq,tail_mass,l2_norm_sq,l4_norm\n");
    for (int k = 0; k <= max_degree; ++k) {
      cum += hp.coeffs[k] * hp.coeffs[k];
      std::printf("%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", k, hp.coeffs[k], cum,
                  tail_mass(hp, k), hp.l2_norm_sq, hp.l4_norm);
    }
    return 0;
  }
  std::printf("Hermite expansion of %s (tol %.3g)\n", act_name.c_str(), tol);
  std::printf("%4s %18s %18s %18s\n", "k", "zeta_k", "cum zeta^2",
              "tail sigma_{>k}^2");
  for (int k = 0; k <= max_degree; ++k) {
    cum += hp.coeffs[k] * hp.coeffs[k];
    std::printf("%4d %18.12g %18.12g %18.12g\n", k, hp.coeffs[k], cum,
                tail_mass(hp, k));
  }
  std::printf("||sigma||_2^2 = %.12g\n||sigma||_4   = %.12g\n", hp.l2_norm_sq,
              hp.l4_norm);
  return 0;
}

inline int run_profile(const std::string& data_path,
                       const std::string& act_name, int max_ell,
                       std::optional<int> feature_subsample,
                       std::uint64_t seed) {
  const DataMatrix X = load_csv(data_path, feature_subsample, seed);
  OrthogonalityProfile prof = orthogonality_profile(X, max_ell);
  std::printf("data: %s  (d = %d, n = %d)\n", data_path.c_str(), X.d(), X.n());
  std::printf("eps_n = %.12g   angle_ok (<= 1/sqrt(2)): %s\n", prof.eps_n,
              prof.angle_ok ? "yes" : "no");
  HermiteProfile hp;
  const bool have_act = !act_name.empty();
  if (have_act) hp = expand_activation(parse_activation(act_name), 16, 1e-10);
  std::printf("%4s %18s", "ell", "Delta_ell");
  if (have_act) std::printf(" %22s", "tail/(4 ||sigma||_4^2)");
  std::printf("\n");
  for (int ell = 0; ell <= max_ell; ++ell) {
    std::printf("%4d %18.12g", ell, prof.deltas[ell]);
    if (have_act && ell <= hp.k_max)
      std::printf(" %22.12g", condition13_threshold(hp, ell));
    std::printf("\n");
  }
  if (have_act) {
    try {
      const int ell = select_ell(prof, hp);
      std::printf("chosen ell = %d (condition 13 holds)\n", ell);
    } catch (const Error& e) {
      std::printf("no admissible ell: %s\n", e.what());
    }
  }
  return 0;
}

inline int run_compare(const std::string& dist, int d, int n,
                       const std::string& act_name, const std::string& tau_name,
                       int N, double lambda, std::uint64_t seed,
                       double sigma_eps, const std::string& ell_arg, int B,
                       int M) {
  DataMatrix X = dist == "cube"
                     ? sample_cube(d, n, substream(seed, "data"))
                     : sample_sphere(d, n, substream(seed, "data"));
  const ActivationSpec act = parse_activation(act_name);
  const ActivationSpec tau = parse_activation(tau_name);
  const HermiteProfile hp = expand_activation(act, 16, 1e-10);
  int ell = 2;
  if (ell_arg == "auto") {
    OrthogonalityProfile prof = orthogonality_profile(X, 10);
    ell = select_ell(prof, hp);
  } else {
    ell = std::stoi(ell_arg);
  }

  const KernelMatrix K = expected_kernel(X, hp, 1e-12);
  const KernelMatrix Kl = polynomial_kernel(X, hp, ell);
  const TeacherModel teacher =
      sample_teacher(tau, d, sigma_eps, substream(seed, "teacher"));
  const Eigen::VectorXd y = labels(teacher, X, substream(seed, "noise"));
  const KernelMatrix K_N =
      empirical_ck_streamed(N, substream(seed, "w"), act, X,
                            Eigen::MatrixXd(d, 0))
          .first;

  struct Col {
    const char* name;
    const KernelMatrix* kernel;
    double train, loocv, gcv, test;
  };
  Col cols[3] = {{"RFRR", &K_N, 0, 0, 0, 0},
                 {"KRR", &K, 0, 0, 0, 0},
                 {"PKRR", &Kl, 0, 0, 0, 0}};
  for (Col& c : cols) {
    const RidgeFit f = fit(*c.kernel, y, lambda);
    c.train = training_error(f);
    c.loocv = loocv_shortcut(f);
    c.gcv = lambda > 0.0 ? gcv(f) : std::nan("");
  }

  // Shared teacher/noise/test draws across the three predictors per
  // replicate, so the differences isolate the kernels.
  const RandomFeatureMap fm = make_feature_map(N, d, substream(seed, "w"), act);
  for (int b = 0; b < B; ++b) {
    const TeacherModel tb = sample_teacher(
        tau, d, sigma_eps, substream(seed, "rep_teacher", static_cast<std::uint64_t>(b)));
    const Eigen::VectorXd yb =
        labels(tb, X, substream(seed, "rep_noise", static_cast<std::uint64_t>(b)));
    const Eigen::MatrixXd Z =
        sample_sphere(d, M, substream(seed, "rep_test", static_cast<std::uint64_t>(b))).X;
    Eigen::VectorXd truth = Z.transpose() * tb.beta;
    for (int i = 0; i < truth.size(); ++i) truth(i) = tb.tau(truth(i));
    const Eigen::MatrixXd crossN = cross_kernel_empirical(fm, X, Z);
    const Eigen::MatrixXd crossK =
        cross_kernel_expected(X, Z, hp, CrossMode::full(1e-12));
    const Eigen::MatrixXd crossL =
        cross_kernel_expected(X, Z, hp, CrossMode::truncated(ell));
    const Eigen::MatrixXd* crosses[3] = {&crossN, &crossK, &crossL};
    for (int c = 0; c < 3; ++c) {
      const RidgeFit f = fit(*cols[c].kernel, yb, lambda);
      const Eigen::VectorXd pred = predict(f, *crosses[c]);
      cols[c].test += (pred - truth).squaredNorm() / static_cast<double>(M) / B;
    }
  }

  std::printf("compare: %s d=%d n=%d N=%d lambda=%g sigma_eps=%g ell=%d seed=%llu\n",
              dist.c_str(), d, n, N, lambda, sigma_eps, ell,
              static_cast<unsigned long long>(seed));
  std::printf("%-8s %16s %16s %16s %16s %16s\n", "metric", "RFRR", "KRR",
              "PKRR", "|RF-KRR|", "|RF-PKRR|");
  auto row = [&](const char* name, double a, double k, double l) {
    std::printf("%-8s %16.10g %16.10g %16.10g %16.10g %16.10g\n", name, a, k, l,
                std::abs(a - k), std::abs(a - l));
  };
  row("train", cols[0].train, cols[1].train, cols[2].train);
  row("loocv", cols[0].loocv, cols[1].loocv, cols[2].loocv);
  if (lambda > 0.0) row("gcv", cols[0].gcv, cols[1].gcv, cols[2].gcv);
  row("test", cols[0].test, cols[1].test, cols[2].test);
  return 0;
}

inline void apply_desk_scale(ExperimentConfig& cfg) {
  if (cfg.dist != "csv" && cfg.d > 128) {
    const double ratio = static_cast<double>(cfg.n) / cfg.d;
    cfg.d = 128;
    cfg.n = std::max(1, static_cast<int>(ratio * 128 + 0.5));
  }
  cfg.trials = std::min(cfg.trials, 5);
  cfg.B = std::min(cfg.B, 8);
  cfg.M = std::min(cfg.M, 256);
}

inline int run_sweep_cmd(const std::string& config_path,
                         const std::string& out_path, int threads,
                         const std::string& scale) {
  ExperimentConfig cfg = load_config(config_path);
  if (scale == "desk") apply_desk_scale(cfg);
  const SweepResult result = run_sweep(cfg, threads);
  for (const std::string& w : result.warnings) std::cerr << "warning: " << w << "\n";
  emit_csv(result, out_path);
  std::cerr << "wrote " << result.rows.size() << " rows to " << out_path
            << " (baseline " << result.kernel_baseline << ")\n";
  return 0;
}

inline int run_report(const std::string& in_path, double threshold) {
  const SweepResult result = parse_sweep_csv(in_path);
  std::vector<std::pair<Metric, double>> series;
  for (const SweepRow& row : result.rows) {
    const std::pair<Metric, double> key{row.metric, row.lambda};
    if (std::find(series.begin(), series.end(), key) == series.end())
      series.push_back(key);
  }
  std::sort(series.begin(), series.end(), [](const auto& a, const auto& b) {
    const int c = std::strcmp(metric_name(a.first), metric_name(b.first));
    if (c != 0) return c < 0;
    return a.second < b.second;
  });
  const std::string pass_hdr = "pass(slope <= " + fmt(threshold, "%.3g") + ")";
  std::printf("%-14s %10s %12s %12s  %s\n", "metric", "lambda", "slope",
              "intercept", pass_hdr.c_str());
  bool all_pass = true;
  for (const auto& [metric, lambda] : series) {
    try {
      const SlopeFit s = fit_slope(result, metric, lambda);
      const bool pass = s.slope <= threshold;
      all_pass = all_pass && pass;
      std::printf("%-14s %10g %12.5f %12.5f  %s\n", metric_name(metric), lambda,
                  s.slope, s.intercept, pass ? "PASS" : "FAIL");
    } catch (const Error& e) {
      all_pass = false;
      std::printf("%-14s %10g %12s %12s  FAIL (%s)\n", metric_name(metric),
                  lambda, "-", "-", e.what());
    }
  }
  return all_pass ? 0 : 2;
}

}  // namespace detail

inline int run(int argc, const char* const* argv) {
  CLI::App app{"random-feature ridge regression concentration toolkit"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic unit-norm dataset");
  std::string gen_dist = "sphere", gen_out;
  int gen_d = 0, gen_n = 0;
  std::uint64_t gen_seed = 0;
  gen->add_option("--dist", gen_dist, "sphere | cube")->required();
  gen->add_option("--d", gen_d, "feature dimension")->required();
  gen->add_option("--n", gen_n, "sample count")->required();
  gen->add_option("--seed", gen_seed, "root seed")->required();
  gen->add_option("--out", gen_out, "output CSV (rows = samples)")->required();

  // profile
  auto* profile = app.add_subcommand("profile", "orthogonality diagnostics for a dataset");
  std::string prof_data, prof_act;
  int prof_maxell = 10;
  std::optional<int> prof_fs;
  std::uint64_t prof_seed = 0;
  profile->add_option("--data", prof_data, "CSV of samples (rows = samples)")->required();
  profile->add_option("--activation", prof_act, "activation for the truncation condition");
  profile->add_option("--max-ell", prof_maxell, "largest ell to tabulate (default 10)");
  profile->add_option("--feature-subsample", prof_fs, "keep this many random features");
  profile->add_option("--seed", prof_seed, "seed for the feature subsample");

  // hermite
  auto* hermite = app.add_subcommand("hermite", "Hermite coefficient table of an activation");
  std::string her_act, her_format = "table";
  int her_k = 0;
  double her_tol = 1e-10;
  hermite->add_option("--activation", her_act, "activation name")->required();
  hermite->add_option("--max-degree", her_k, "largest coefficient degree")->required();
  hermite->add_option("--tol", her_tol, "quadrature tolerance (default 1e-10)");
  hermite->add_option("--format", her_format, "table | csv")
      ->check(CLI::IsMember({"table", "csv"}));

  // compare
  auto* compare = app.add_subcommand("compare", "one-shot RFRR / KRR / PKRR comparison");
  std::string cmp_dist = "sphere", cmp_act, cmp_tau, cmp_ell = "2";
  int cmp_d = 0, cmp_n = 0, cmp_N = 0, cmp_B = 8, cmp_M = 256;
  double cmp_lambda = 0.0, cmp_sigma_eps = 0.0;
  std::uint64_t cmp_seed = 0;
  compare->add_option("--dist", cmp_dist, "sphere | cube");
  compare->add_option("--d", cmp_d, "feature dimension")->required();
  compare->add_option("--n", cmp_n, "sample count")->required();
  compare->add_option("--activation", cmp_act, "student activation")->required();
  compare->add_option("--tau", cmp_tau, "teacher activation")->required();
  compare->add_option("--N", cmp_N, "random-feature width")->required();
  compare->add_option("--lambda", cmp_lambda, "ridge parameter")->required();
  compare->add_option("--seed", cmp_seed, "root seed")->required();
  compare->add_option("--sigma-eps", cmp_sigma_eps, "label noise (default 0)");
  compare->add_option("--ell", cmp_ell, "PKRR degree, or 'auto' (default 2)");
  compare->add_option("--B", cmp_B, "test replicates (default 8)");
  compare->add_option("--M", cmp_M, "test points per replicate (default 256)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run a configured width sweep");
  std::string swp_config, swp_out, swp_scale = "paper";
  int swp_threads = detail::default_threads();
  sweep->add_option("--config", swp_config, "TOML experiment config")->required();
  sweep->add_option("--out", swp_out, "output CSV path")->required();
  sweep->add_option("--threads", swp_threads,
                    "worker threads (default RFCONC_THREADS or hardware)");
  sweep->add_option("--scale", swp_scale, "desk | paper (desk shrinks d,n,trials)")
      ->check(CLI::IsMember({"desk", "paper"}));

  // report
  auto* report = app.add_subcommand("report", "slope table for a sweep CSV");
  std::string rep_in;
  double rep_threshold = -0.4;
  report->add_option("--in", rep_in, "sweep CSV")->required();
  report->add_option("--threshold", rep_threshold,
                     "pass if slope <= threshold (default -0.4)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed())
      return detail::run_gen(gen_dist, gen_d, gen_n, gen_seed, gen_out);
    if (profile->parsed())
      return detail::run_profile(prof_data, prof_act, prof_maxell, prof_fs,
                                 prof_seed);
    if (hermite->parsed())
      return detail::run_hermite(her_act, her_k, her_tol, her_format);
    if (compare->parsed())
      return detail::run_compare(cmp_dist, cmp_d, cmp_n, cmp_act, cmp_tau,
                                 cmp_N, cmp_lambda, cmp_seed, cmp_sigma_eps,
                                 cmp_ell, cmp_B, cmp_M);
    if (sweep->parsed())
      return detail::run_sweep_cmd(swp_config, swp_out, swp_threads, swp_scale);
    if (report->parsed()) return detail::run_report(rep_in, rep_threshold);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace cli
}  // namespace rfconc
