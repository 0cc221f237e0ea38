#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "rfconc/dataset.hpp"
#include "rfconc/kernel.hpp"
#include "rfconc/ridge.hpp"

using namespace rfconc;
using Catch::Approx;

namespace {

DataMatrix orthonormal_data(int d, int n) {
  DataMatrix X;
  X.X = Eigen::MatrixXd::Identity(d, n);
  return X;
}

// Two unit columns in the plane with a prescribed inner product.
DataMatrix pair_with_rho(double rho) {
  DataMatrix X;
  X.X.resize(2, 2);
  X.X.col(0) << 1.0, 0.0;
  X.X.col(1) << rho, std::sqrt(1.0 - rho * rho);
  return X;
}

// Monte-Carlo oracle for E[sigma(w.x) sigma(w.z)] over w ~ N(0, Id).
std::pair<double, double> mc_pair_kernel(const ActivationSpec& act, double rho,
                                         int samples, std::uint64_t seed) {
  CounterRng rng(substream(seed, "mc_pair"));
  const double s = std::sqrt(1.0 - rho * rho);
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double w1 = rng.next_gaussian();
    const double w2 = rng.next_gaussian();
    const double v = act(w1) * act(rho * w1 + s * w2);
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / samples;
  const double var = std::max(sum_sq / samples - mean * mean, 0.0);
  return {mean, std::sqrt(var / samples)};
}

}  // namespace

TEST_CASE("empirical_ck: constant activation gives the all-ones matrix") {
  const DataMatrix X = sample_sphere(5, 7, 1);
  const RandomFeatureMap fm =
      make_feature_map(32, 5, 2, make_activation(ActKind::constant, 1.0));
  const KernelMatrix K = empirical_ck(fm, X);
  CHECK((K.M - Eigen::MatrixXd::Ones(7, 7)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(K.provenance == KernelProvenance::empirical);
  CHECK(K.N == 32);
}

TEST_CASE("empirical_ck: identity activation concentrates on X^T X") {
  const DataMatrix X = orthonormal_data(8, 8);
  const RandomFeatureMap fm =
      make_feature_map(100000, 8, 3, make_activation(ActKind::identity));
  const KernelMatrix K = empirical_ck(fm, X);
  CHECK((K.M - Eigen::MatrixXd::Identity(8, 8)).norm() < 0.05);
  CHECK(min_eigenvalue(K) >= -1e-12);  // Gram structure
}

TEST_CASE("empirical_ck: streamed pass reproduces the materialized map") {
  const DataMatrix X = sample_sphere(6, 9, 4);
  const ActivationSpec act = poly5_activation();
  const RandomFeatureMap fm = make_feature_map(3000, 6, 5, act);
  const KernelMatrix a = empirical_ck(fm, X);
  const auto [b, cross] =
      empirical_ck_streamed(3000, 5, act, X, Eigen::MatrixXd(6, 0));
  CHECK((a.M - b.M).cwiseAbs().maxCoeff() == 0.0);
  CHECK(cross.cols() == 0);
}

TEST_CASE("empirical_ck: streamed cross kernel is thread-count independent") {
  const DataMatrix X = sample_sphere(6, 9, 4);
  const Eigen::MatrixXd Z = sample_sphere(6, 700, 14).X;
  const ActivationSpec act = make_activation(ActKind::softplus);
  const auto [k1, c1] = empirical_ck_streamed(2000, 5, act, X, Z,
                                              kFeatureBlockRows, 1);
  const auto [k3, c3] = empirical_ck_streamed(2000, 5, act, X, Z,
                                              kFeatureBlockRows, 3);
  CHECK((k1.M - k3.M).cwiseAbs().maxCoeff() == 0.0);
  CHECK((c1 - c3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("empirical_ck: symmetry is exact and dimensions are checked") {
  const DataMatrix X = sample_sphere(6, 10, 6);
  const RandomFeatureMap fm =
      make_feature_map(512, 6, 7, make_activation(ActKind::relu));
  const KernelMatrix K = empirical_ck(fm, X);
  CHECK((K.M - K.M.transpose()).cwiseAbs().maxCoeff() == 0.0);
  const DataMatrix bad = sample_sphere(5, 10, 6);
  CHECK_THROWS_AS(empirical_ck(fm, bad), DimensionMismatch);
}

TEST_CASE("expected_kernel: orthonormal data") {
  const DataMatrix X = orthonormal_data(8, 8);
  const HermiteProfile relu =
      expand_activation(make_activation(ActKind::relu), 16, 1e-10);
  const KernelMatrix K = expected_kernel(X, relu);
  const double z0sq = relu.coeffs[0] * relu.coeffs[0];
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      const double expect = i == j ? relu.l2_norm_sq : z0sq;
      REQUIRE(K.M(i, j) == Approx(expect).margin(1e-12));
    }
  }
}

TEST_CASE("expected_kernel: exact finite sum for polynomial activations") {
  const DataMatrix X = sample_sphere(7, 5, 8);
  const HermiteProfile p = expand_activation(poly5_activation(), 16, 1e-12);
  const KernelMatrix K = expected_kernel(X, p);
  const Eigen::MatrixXd G = gram_matrix(X.X);
  Eigen::MatrixXd direct = Eigen::MatrixXd::Zero(5, 5);
  Eigen::MatrixXd pw = Eigen::MatrixXd::Ones(5, 5);
  for (int k = 0; k <= 5; ++k) {
    direct += p.coeffs[k] * p.coeffs[k] * pw;
    pw = pw.cwiseProduct(G);
  }
  CHECK((K.M - direct).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("expected_kernel: relu pair matches the Monte-Carlo oracle") {
  const DataMatrix X = pair_with_rho(0.5);
  const HermiteProfile relu =
      expand_activation(make_activation(ActKind::relu), 40, 1e-11);
  const KernelMatrix K = expected_kernel(X, relu, 1e-12);
  const auto [mc, se] =
      mc_pair_kernel(make_activation(ActKind::relu), 0.5, 10000000, 17);
  CHECK(std::abs(K.M(0, 1) - mc) <= 3.0 * se);
  // series value: sum zeta_k^2 2^{-k}
  double series = 0.0;
  for (int k = 0; k <= 40; ++k)
    series += relu.coeffs[k] * relu.coeffs[k] * std::pow(0.5, k);
  CHECK(K.M(0, 1) == Approx(series).margin(1e-10));
}

TEST_CASE("expected_kernel: duplicate columns with infinite expansion fail") {
  DataMatrix X = orthonormal_data(6, 4);
  X.X.col(3) = X.X.col(0);
  const HermiteProfile relu =
      expand_activation(make_activation(ActKind::relu), 16, 1e-10);
  CHECK_THROWS_AS(expected_kernel(X, relu), TailNotConvergent);
  // ...but a polynomial activation stays exact
  const HermiteProfile p = expand_activation(poly5_activation(), 16, 1e-10);
  const KernelMatrix K = expected_kernel(X, p);
  CHECK(K.M(0, 3) == Approx(p.l2_norm_sq).margin(1e-10));
}

TEST_CASE("polynomial_kernel reproduces the explicit degree-2 kernel") {
  const DataMatrix X = sample_sphere(40, 12, 9);
  const HermiteProfile p = expand_activation(poly5_activation(), 16, 1e-12);
  const KernelMatrix K2 = polynomial_kernel(X, p, 2);
  const Eigen::MatrixXd G = gram_matrix(X.X);
  const Eigen::MatrixXd explicit_K2 =
      Eigen::MatrixXd::Ones(12, 12) + G / 6.0 +
      G.cwiseProduct(G) / 9.0 +
      (26.0 / 36.0) * Eigen::MatrixXd::Identity(12, 12);
  CHECK((K2.M - explicit_K2).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("polynomial_kernel: zero tail makes it the expected kernel") {
  const DataMatrix X = sample_sphere(9, 6, 10);
  const HermiteProfile p = expand_activation(poly5_activation(), 16, 1e-12);
  const KernelMatrix K5 = polynomial_kernel(X, p, 5);
  const KernelMatrix K = expected_kernel(X, p);
  CHECK((K5.M - K.M).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("polynomial_kernel: min eigenvalue dominated by the implicit ridge") {
  const HermiteProfile p = expand_activation(poly5_activation(), 16, 1e-12);
  for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
    const DataMatrix X = sample_sphere(50, 20, seed);
    for (int ell : {0, 1, 2, 3}) {
      const KernelMatrix Kl = polynomial_kernel(X, p, ell);
      REQUIRE(min_eigenvalue(Kl) >= tail_mass(p, ell) - 1e-10);
    }
  }
}

TEST_CASE("hadamard powers of the gram matrix stay PSD") {
  const DataMatrix X = sample_sphere(30, 15, 14);
  const Eigen::MatrixXd G = gram_matrix(X.X);
  Eigen::MatrixXd pw = Eigen::MatrixXd::Ones(15, 15);
  for (int k = 0; k <= 10; ++k) {
    KernelMatrix K;
    K.M = pw;
    REQUIRE(min_eigenvalue(K) >= -1e-8);
    pw = pw.cwiseProduct(G);
  }
}

TEST_CASE("cross_kernel_empirical") {
  const DataMatrix X = sample_sphere(6, 8, 15);
  const ActivationSpec relu = make_activation(ActKind::relu);
  const RandomFeatureMap fm = make_feature_map(256, 6, 16, relu);
  SECTION("Z = X consistency with the kernel matrix") {
    const Eigen::MatrixXd cross = cross_kernel_empirical(fm, X, X.X);
    const KernelMatrix K = empirical_ck(fm, X);
    CHECK((cross - K.M).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SECTION("constant activation") {
    const RandomFeatureMap ones =
        make_feature_map(64, 6, 17, make_activation(ActKind::constant, 1.0));
    const Eigen::MatrixXd cross = cross_kernel_empirical(ones, X, X.X.leftCols(3));
    CHECK((cross - Eigen::MatrixXd::Ones(8, 3)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SECTION("identity activation concentrates on X^T Z") {
    const RandomFeatureMap lin =
        make_feature_map(100000, 6, 18, make_activation(ActKind::identity));
    const Eigen::MatrixXd Z = sample_sphere(6, 1, 19).X;
    const Eigen::MatrixXd cross = cross_kernel_empirical(lin, X, Z);
    CHECK((cross - X.X.transpose() * Z).cwiseAbs().maxCoeff() < 0.05);
  }
}

TEST_CASE("cross_kernel_expected") {
  const HermiteProfile relu =
      expand_activation(make_activation(ActKind::relu), 40, 1e-11);
  SECTION("orthogonal test column gives zeta_0^2") {
    const DataMatrix X = orthonormal_data(6, 4);
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(6, 1);
    Z(5, 0) = 1.0;
    const Eigen::MatrixXd cross =
        cross_kernel_expected(X, Z, relu, CrossMode::full(1e-12));
    for (int i = 0; i < 4; ++i)
      REQUIRE(cross(i, 0) ==
              Approx(relu.coeffs[0] * relu.coeffs[0]).margin(1e-12));
  }
  SECTION("Z = X in truncated mode matches the polynomial kernel") {
    const DataMatrix X = sample_sphere(12, 7, 20);
    const HermiteProfile p = expand_activation(poly5_activation(), 16, 1e-12);
    const Eigen::MatrixXd cross =
        cross_kernel_expected(X, X.X, p, CrossMode::truncated(2));
    const KernelMatrix K2 = polynomial_kernel(X, p, 2);
    for (int i = 0; i < 7; ++i) {
      for (int j = 0; j < 7; ++j) {
        if (i == j) {
          REQUIRE(cross(i, i) == Approx(p.l2_norm_sq).margin(1e-12));
        } else {
          REQUIRE(cross(i, j) == Approx(K2.M(i, j)).margin(1e-12));
        }
      }
    }
  }
  SECTION("relu pair against the Monte-Carlo oracle") {
    DataMatrix X;  // single training column
    X.X.resize(2, 1);
    X.X << 1.0, 0.0;
    Eigen::MatrixXd Z(2, 1);
    Z << 0.3, std::sqrt(1.0 - 0.09);
    const Eigen::MatrixXd cross =
        cross_kernel_expected(X, Z, relu, CrossMode::full(1e-12));
    const auto [mc, se] =
        mc_pair_kernel(make_activation(ActKind::relu), 0.3, 10000000, 21);
    CHECK(std::abs(cross(0, 0) - mc) <= 3.0 * se);
  }
  SECTION("antipodal points with infinite expansion are flagged") {
    DataMatrix X;
    X.X.resize(2, 1);
    X.X << 1.0, 0.0;
    const Eigen::MatrixXd Z = -X.X.col(0);
    CHECK_THROWS_AS(cross_kernel_expected(X, Z, relu, CrossMode::full(1e-12)),
                    TailNotConvergent);
  }
}

TEST_CASE("normalized_concentration") {
  const DataMatrix X = sample_sphere(60, 10, 22);
  const HermiteProfile relu =
      expand_activation(make_activation(ActKind::relu), 16, 1e-10);
  const KernelMatrix K = expected_kernel(X, relu, 1e-10);
  SECTION("zero for identical kernels") {
    CHECK(normalized_concentration(K, K, 0.5) <= 1e-14);
  }
  SECTION("diagonal shift has a closed form") {
    KernelMatrix K_N = K;
    const double delta = 0.3;
    K_N.M.diagonal().array() += delta;
    const double expect = delta / (min_eigenvalue(K) + 0.2);
    CHECK(normalized_concentration(K, K_N, 0.2) == Approx(expect).epsilon(1e-10));
  }
  SECTION("not positive definite raises") {
    KernelMatrix zero;
    zero.M = Eigen::MatrixXd::Zero(3, 3);
    CHECK_THROWS_AS(normalized_concentration(zero, zero, 0.0),
                    NotPositiveDefinite);
  }
}

TEST_CASE("min_eigenvalue basics") {
  KernelMatrix I;
  I.M = Eigen::MatrixXd::Identity(4, 4);
  CHECK(min_eigenvalue(I) == Approx(1.0).margin(1e-13));
  KernelMatrix D;
  D.M = Eigen::MatrixXd::Zero(2, 2);
  D.M(0, 0) = 2.0;
  D.M(1, 1) = 5.0;
  CHECK(min_eigenvalue(D) == Approx(2.0).margin(1e-13));
}

TEST_CASE("expected and polynomial kernels keep the trace identity") {
  const DataMatrix X = sample_sphere(25, 14, 23);
  const HermiteProfile p = expand_activation(poly5_activation(), 16, 1e-12);
  for (const double lambda : {0.0, 0.3, 2.0}) {
    for (const KernelMatrix& K :
         {expected_kernel(X, p), polynomial_kernel(X, p, 2)}) {
      const double tr = (K.M.trace() + lambda * 14) / 14.0;
      REQUIRE(std::abs(tr - (lambda + p.l2_norm_sq)) <= 1e-10);
    }
  }
}

TEST_CASE("empirical kernels are unbiased for the expected kernel") {
  const DataMatrix X = sample_sphere(64, 8, 24);
  const ActivationSpec act = make_activation(ActKind::relu);
  const HermiteProfile relu = expand_activation(act, 24, 1e-11);
  const KernelMatrix K = expected_kernel(X, relu, 1e-11);
  const int draws = 200;
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(8, 8);
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(8, 8);
  for (int r = 0; r < draws; ++r) {
    const RandomFeatureMap fm =
        make_feature_map(256, 64, 1000 + static_cast<std::uint64_t>(r), act);
    const Eigen::MatrixXd M = empirical_ck(fm, X).M;
    mean += M;
    m2 += M.cwiseProduct(M);
  }
  mean /= draws;
  m2 /= draws;
  const Eigen::MatrixXd se =
      ((m2 - mean.cwiseProduct(mean)).cwiseMax(0.0) / draws).cwiseSqrt();
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      REQUIRE(std::abs(mean(i, j) - K.M(i, j)) <=
              4.0 * se(i, j) + 1e-12);
}

TEST_CASE("prop 2.1 bound holds numerically") {
  const HermiteProfile p = expand_activation(poly5_activation(), 16, 1e-12);
  for (std::uint64_t seed : {31ULL, 32ULL, 33ULL}) {
    const DataMatrix X = sample_sphere(1500, 60, seed);
    OrthogonalityProfile prof = orthogonality_profile(X, 10);
    const int ell = select_ell(prof, p);
    const KernelMatrix K = expected_kernel(X, p);
    const KernelMatrix Kl = polynomial_kernel(X, p, ell);
    KernelMatrix diff;
    diff.M = K.M - Kl.M;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(diff.M,
                                                      Eigen::EigenvaluesOnly);
    const double spec_norm = es.eigenvalues().cwiseAbs().maxCoeff();
    REQUIRE(spec_norm <=
            std::sqrt(2.0) * p.l4_norm_sq() * prof.deltas[ell] + 1e-12);
    REQUIRE(min_eigenvalue(K) >= 0.5 * tail_mass(p, ell));
  }
}

TEST_CASE("kernel cache round trip") {
  const DataMatrix X = sample_sphere(10, 6, 25);
  const HermiteProfile p = expand_activation(poly5_activation(), 16, 1e-12);
  const KernelMatrix K = polynomial_kernel(X, p, 2);
  const std::string path = "rfconc_test_kernel.bin";
  save_kernel(K, path);
  const KernelMatrix L = load_kernel(path);
  CHECK(L.provenance == KernelProvenance::polynomial);
  CHECK(L.order == 2);
  CHECK((L.M - K.M).cwiseAbs().maxCoeff() == 0.0);

  // corrupt the magic
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXXX", 5);
  }
  CHECK_THROWS_AS(load_kernel(path), ParseError);
  std::remove(path.c_str());
}
