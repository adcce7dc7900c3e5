#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <limits>

#include "mvred/error.hpp"
#include "mvred/pca.hpp"
#include "mvred/rng.hpp"
#include "oracles.hpp"

using namespace mvred;

namespace {

RowMatrixXd random_matrix(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  RowMatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("fit on a noiseless line recovers the diagonal direction") {
  const int n = 40;
  RowMatrixXd x(n, 2);
  for (int i = 0; i < n; ++i) {
    const double t = i - (n - 1) / 2.0;
    x(i, 0) = t;
    x(i, 1) = t;
  }
  const auto model = fit_pca(x);
  CHECK(model.ev[0] > 0.0);
  CHECK(model.ev[1] == doctest::Approx(0.0).epsilon(1e-12));
  const double inv_sqrt2 = 0.7071067811865476;
  CHECK(model.c_full(0, 0) == doctest::Approx(inv_sqrt2).epsilon(1e-12));
  CHECK(model.c_full(0, 1) == doctest::Approx(inv_sqrt2).epsilon(1e-12));
}

TEST_CASE("fit on a single point degenerates cleanly") {
  RowMatrixXd x(1, 3);
  x << 1.5, -2.0, 4.25;
  const auto model = fit_pca(x);
  CHECK(model.mu[0] == 1.5);
  CHECK(model.mu[1] == -2.0);
  CHECK(model.mu[2] == 4.25);
  CHECK(model.ev.isZero(0.0));
  CHECK(model.c_full.isIdentity(0.0));
}

TEST_CASE("spectral reassembly matches the brute-force covariance") {
  const auto x = random_matrix(50, 4, 7);
  const auto model = fit_pca(x);
  const Eigen::MatrixXd reassembled =
      model.c_full.transpose() * model.ev.asDiagonal() * model.c_full;
  const Eigen::MatrixXd reference = oracle::covariance(x);
  CHECK((reassembled - reference).norm() / reference.norm() < 1e-8);
}

TEST_CASE("fitted bases are orthonormal") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto n = static_cast<Eigen::Index>(3 + seed * 17);
    const auto x = random_matrix(n, 5, seed);
    const auto model = fit_pca(x);
    const Eigen::MatrixXd gram = model.c_full * model.c_full.transpose();
    CHECK((gram - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() <
          1e-8);
    // trace preservation
    CHECK(model.ev.sum() ==
          doctest::Approx(oracle::covariance(x).trace()).epsilon(1e-8));
    // nonincreasing, nonnegative spectrum
    for (Eigen::Index i = 1; i < model.ev.size(); ++i)
      CHECK(model.ev[i] <= model.ev[i - 1]);
    CHECK(model.ev.minCoeff() >= 0.0);
  }
}

TEST_CASE("fit is deterministic bit-for-bit") {
  const auto x = random_matrix(64, 6, 21);
  const auto a = fit_pca(x);
  const auto b = fit_pca(x);
  CHECK(std::memcmp(a.c_full.data(), b.c_full.data(),
                    sizeof(double) * 36) == 0);
  CHECK(std::memcmp(a.ev.data(), b.ev.data(), sizeof(double) * 6) == 0);
  // canonical signs: the largest-magnitude entry of each PC is positive
  for (Eigen::Index r = 0; r < 6; ++r) {
    Eigen::Index pivot;
    a.c_full.row(r).cwiseAbs().maxCoeff(&pivot);
    CHECK(a.c_full(r, pivot) > 0.0);
  }
}

TEST_CASE("fit rejects non-finite input") {
  RowMatrixXd x = random_matrix(5, 3, 1);
  x(2, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_pca(x), ComputeError);
}

TEST_CASE("select_q walks the cumulative spectrum") {
  LocalPCAModel model;
  model.mu = Eigen::VectorXd::Zero(4);
  model.c_full = Eigen::MatrixXd::Identity(4, 4);
  model.ev.resize(4);
  model.ev << 9, 1, 0, 0;
  model.q = 4;
  CHECK(select_q(model, 0.9) == 1);
  CHECK(select_q(model, 0.999) == 2);
  CHECK(select_q(model, 1.0) == 2);

  model.ev.setZero();
  CHECK(select_q(model, 0.5) == 1);  // constant data
  CHECK_THROWS_AS(select_q(model, 0.0), ConfigError);
  CHECK_THROWS_AS(select_q(model, 1.5), ConfigError);
}

TEST_CASE("select_q output is nonincreasing as the target drops") {
  const auto x = random_matrix(80, 8, 3);
  const auto model = fit_pca(x);
  int prev = 8;
  for (double p : {1.0, 0.999, 0.99, 0.9, 0.5, 0.1}) {
    const int q = select_q(model, p);
    CHECK(q <= prev);
    CHECK(q >= 1);
    prev = q;
  }
}

TEST_CASE("projection centers and projects") {
  const auto x = random_matrix(30, 5, 11);
  auto model = fit_pca(x);

  RowMatrixXd mu_row(1, 5);
  mu_row = model.mu.transpose();
  const RowMatrixXd w = project(model, mu_row);
  CHECK(w.cwiseAbs().maxCoeff() < 1e-12);

  // q = d round trip
  const RowMatrixXd full = project(model, x, 5);
  const RowMatrixXd back = reconstruct(model, full);
  CHECK((back - x).norm() / x.norm() < 1e-9);

  RowMatrixXd bad(2, 4);
  bad.setZero();
  CHECK_THROWS_AS(project(model, bad), ConfigError);
  CHECK_THROWS_AS(reconstruct(model, RowMatrixXd::Zero(2, 6)), ConfigError);
}

TEST_CASE("planted rank-2 data reconstructs exactly from two components") {
  // rank-2 rows: random coefficients on two fixed directions plus an offset
  Rng rng(31);
  Eigen::VectorXd a(5), b(5), mean(5);
  for (int j = 0; j < 5; ++j) {
    a[j] = rng.normal();
    b[j] = rng.normal();
    mean[j] = rng.normal() * 2.0;
  }
  RowMatrixXd x(60, 5);
  for (int i = 0; i < 60; ++i)
    x.row(i) =
        (mean + rng.normal() * a + rng.normal() * b).transpose();

  auto model = fit_pca(x);
  CHECK(select_q(model, 0.999999) == 2);
  model.q = 2;
  const RowMatrixXd w = project(model, x);
  CHECK(w.cols() == 2);
  const RowMatrixXd back = reconstruct(model, w);
  CHECK((back - x).norm() / x.norm() <= 1e-8);
}

TEST_CASE("reconstruct of a zero row returns the mean") {
  const auto x = random_matrix(20, 4, 13);
  const auto model = fit_pca(x);
  const RowMatrixXd zero = RowMatrixXd::Zero(1, 2);
  const RowMatrixXd rec = reconstruct(model, zero);
  CHECK((rec.row(0).transpose() - model.mu).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("variance ratio arithmetic on a frozen spectrum") {
  LocalPCAModel model;
  model.mu = Eigen::VectorXd::Zero(2);
  model.c_full = Eigen::MatrixXd::Identity(2, 2);
  model.ev.resize(2);
  model.ev << 3, 1;
  model.q = 2;
  CHECK(explained_variance_ratio(model, 1) == doctest::Approx(0.75));
  CHECK(explained_variance_ratio(model, 2) == doctest::Approx(1.0));
}

TEST_CASE("variance ratio and residual are complementary for every q") {
  const auto x = random_matrix(100, 6, 17);
  const auto model = fit_pca(x);
  for (int q = 1; q <= 6; ++q) {
    const double ratio = explained_variance_ratio(model, q);
    const double residual = normalized_residual(x, model, q);
    CHECK(ratio + residual == doctest::Approx(1.0).epsilon(1e-8));
    // cross-check the residual against the loop-based oracle
    const double reference =
        oracle::normalized_residual(x, model.mu, model.c_full, q);
    CHECK(residual == doctest::Approx(reference).epsilon(1e-10));
  }
  // q = d endpoint
  CHECK(explained_variance_ratio(model, 6) == doctest::Approx(1.0));
  CHECK(normalized_residual(x, model, 6) < 1e-12);
}

TEST_CASE("residual honors the variance target after select_q") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto x = random_matrix(120, 7, 100 + seed);
    const auto model = fit_pca(x);
    for (double p : {0.999, 0.99, 0.9, 0.6}) {
      const int q = select_q(model, p);
      CHECK(normalized_residual(x, model, q) <= 1.0 - p + 1e-8);
    }
  }
}
