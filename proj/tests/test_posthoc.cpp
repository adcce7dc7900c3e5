#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mvred/bundle.hpp"
#include "mvred/error.hpp"
#include "mvred/posthoc.hpp"
#include "mvred/rng.hpp"
#include "mvred/synthetic.hpp"
#include "oracles.hpp"

using namespace mvred;

namespace {

SyntheticField noisy_field(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.grid.dims = {32, 32};
  spec.num_vars = 6;
  spec.n_regions = 4;
  spec.latent_dims = {1, 2, 3, 2};
  spec.noise_sigma = 0.08;
  spec.seed = seed;
  return gen_synthetic(spec);
}

ReducedBundle make_bundle(const MultivariateField& field, double p,
                          double rate, Dtype precision) {
  const auto pset = partition_regular(field.grid, {8, 8});
  ReduceOptions options;
  options.variance_target = p;
  options.plan.rate_random = rate / 2;
  options.plan.rate_feature = rate / 2;
  options.plan.seed = 11;
  options.precision = precision;
  return reduce(field, pset, options);
}

MultivariateField single_partition_field(const RowMatrixXd& rows) {
  MultivariateField f;
  f.grid.dims = {static_cast<int>(rows.rows()), 1};
  f.data = rows;
  for (Eigen::Index j = 0; j < rows.cols(); ++j)
    f.var_names.push_back("v" + std::to_string(j));
  f.var_units.assign(static_cast<std::size_t>(rows.cols()), "");
  return f;
}

}  // namespace

TEST_CASE("lossless bundles reconstruct and report zero error") {
  const auto synth = noisy_field(1);
  const auto bundle = make_bundle(synth.field, 1.0, 1.0, Dtype::f64);
  const auto report = error_report(bundle, synth.field);
  CHECK(report.norm_mv_recon_error < 1e-12);
  CHECK(report.norm_mv_recon_error_sampled < 1e-12);
  CHECK(report.min_var_rmse < 1e-9);
  CHECK(report.max_var_rmse < 1e-9);
}

TEST_CASE("variance-target bundles respect the error bound") {
  const auto synth = noisy_field(2);
  const auto bundle = make_bundle(synth.field, 0.999, 0.1, Dtype::f64);
  const auto report = error_report(bundle, synth.field);
  CHECK(report.norm_mv_recon_error <= 0.001 + 1e-8);
  // per-variable RMSE extrema are populated and ordered
  CHECK(report.min_var_rmse <= report.max_var_rmse);
  CHECK(report.var_rmse.size() == 6);
}

TEST_CASE("error report flags zero-range variables instead of dividing") {
  auto synth = noisy_field(3);
  synth.field.data.col(4).setConstant(2.0);  // degenerate variable
  const auto bundle = make_bundle(synth.field, 0.999, 0.2, Dtype::f64);
  const auto report = error_report(bundle, synth.field);
  CHECK(report.var_degenerate[4]);
  CHECK(report.var_rmse[4] == 0.0);
}

TEST_CASE("error report validates its inputs") {
  const auto synth = noisy_field(4);
  const auto bundle = make_bundle(synth.field, 0.999, 0.2, Dtype::f64);
  auto other = noisy_field(5);
  other.field.grid.dims = {16, 64};
  other.field.data.resize(16 * 64, 6);
  other.field.data.setZero();
  CHECK_THROWS_AS(error_report(bundle, other.field), ConfigError);
}

TEST_CASE("query distance vanishes at the partition mean") {
  // one partition whose mean is itself a data row
  RowMatrixXd rows(5, 3);
  rows << 1, 2, 3,
          3, 2, 1,
          2, 2, 2,   // the mean row
          0, 4, 2,
          4, 0, 2;
  const auto field = single_partition_field(rows);
  const auto pset = partition_regular(field.grid, {5, 1});
  ReduceOptions options;
  options.variance_target = 1.0;
  options.plan.rate_random = 1.0;
  options.precision = Dtype::f64;
  const auto bundle = reduce(field, pset, options);

  QuerySpec spec;
  spec.values = {{"v0", 2.0}, {"v1", 2.0}, {"v2", 2.0}};
  const auto result = query(bundle, spec);
  REQUIRE(result.items.size() == 5);
  const auto it = std::find_if(result.items.begin(), result.items.end(),
                               [](const auto& i) { return i.index == 2; });
  REQUIRE(it != result.items.end());
  CHECK(it->distance < 1e-12);
  CHECK(result.min_distance < 1e-12);
}

TEST_CASE("full-rank queries preserve original-space distances and ranking") {
  const auto synth = noisy_field(6);
  const auto bundle = make_bundle(synth.field, 1.0, 0.3, Dtype::f64);

  QuerySpec spec;
  spec.values = {{"v0", 0.5}, {"v1", -1.0}, {"v2", 0.25},
                 {"v3", 1.5}, {"v4", 0.0},  {"v5", -0.75}};
  const auto result = query(bundle, spec);
  REQUIRE(!result.items.empty());

  Eigen::VectorXd q_vec(6);
  q_vec << 0.5, -1.0, 0.25, 1.5, 0.0, -0.75;
  std::vector<double> original;
  original.reserve(result.items.size());
  for (const auto& item : result.items) {
    const double d =
        (synth.field.data.row(item.index).transpose() - q_vec).norm();
    CHECK(item.distance == doctest::Approx(d).epsilon(1e-6));
    original.push_back(d);
  }

  // identical sample ordering under both metrics
  std::vector<std::size_t> by_pc(result.items.size()), by_orig(result.items.size());
  std::iota(by_pc.begin(), by_pc.end(), std::size_t{0});
  by_orig = by_pc;
  std::stable_sort(by_pc.begin(), by_pc.end(), [&](std::size_t a, std::size_t b) {
    return result.items[a].distance < result.items[b].distance;
  });
  std::stable_sort(by_orig.begin(), by_orig.end(),
                   [&](std::size_t a, std::size_t b) {
                     return original[a] < original[b];
                   });
  CHECK(by_pc == by_orig);
}

TEST_CASE("projected queries never exceed the original-space distance") {
  const auto synth = noisy_field(7);
  const auto bundle = make_bundle(synth.field, 0.99, 0.25, Dtype::f64);

  QuerySpec spec;
  spec.values = {{"v0", 1.0}, {"v1", 1.0}, {"v2", -2.0},
                 {"v3", 0.0}, {"v4", 2.0}, {"v5", 0.5}};
  const auto result = query(bundle, spec);
  Eigen::VectorXd q_vec(6);
  q_vec << 1.0, 1.0, -2.0, 0.0, 2.0, 0.5;
  for (const auto& item : result.items) {
    const double original =
        (synth.field.data.row(item.index).transpose() - q_vec).norm();
    CHECK(item.distance <= original + 1e-6);
  }
}

TEST_CASE("partial queries pin unspecified variables at the partition mean") {
  RowMatrixXd rows(4, 3);
  rows << 0, 10, 5,
          2, 10, 5,
          0, 14, 5,
          2, 14, 5;
  const auto field = single_partition_field(rows);
  const auto pset = partition_regular(field.grid, {4, 1});
  ReduceOptions options;
  options.variance_target = 1.0;
  options.plan.rate_random = 1.0;
  options.precision = Dtype::f64;
  const auto bundle = reduce(field, pset, options);

  QuerySpec spec;
  spec.values = {{"v0", 1.0}};  // mean of v0 is 1, so Q == mu
  const auto result = query(bundle, spec);
  // distance to each sample is its own deviation from the mean
  for (const auto& item : result.items) {
    const Eigen::VectorXd mu = bundle.parts[0].model.mu;
    const double expected =
        (field.data.row(item.index).transpose() - mu).norm();
    CHECK(item.distance == doctest::Approx(expected).epsilon(1e-9));
  }

  QuerySpec unknown;
  unknown.values = {{"pressure", 1.0}};
  CHECK_THROWS_AS(query(bundle, unknown), ConfigError);
  CHECK_THROWS_AS(query(bundle, QuerySpec{}), ConfigError);
}

TEST_CASE("normalized distances span [0,1] and keep raw values") {
  const auto synth = noisy_field(8);
  const auto bundle = make_bundle(synth.field, 0.999, 0.2, Dtype::f64);
  QuerySpec spec;
  spec.values = {{"v0", 0.0}, {"v3", 1.0}};
  const auto result = query(bundle, spec);
  const auto norm = result.normalized();
  REQUIRE(norm.size() == result.items.size());
  const double lo = *std::min_element(norm.begin(), norm.end());
  const double hi = *std::max_element(norm.begin(), norm.end());
  CHECK(lo == doctest::Approx(0.0));
  CHECK(hi == doctest::Approx(1.0));
  for (std::size_t i = 0; i < norm.size(); ++i)
    CHECK(result.items[i].distance >= result.min_distance);
}

TEST_CASE("bundle covariance matches the brute-force covariance") {
  Rng rng(17);
  RowMatrixXd rows(200, 5);
  for (Eigen::Index i = 0; i < rows.size(); ++i)
    rows.data()[i] = rng.normal() * 2.0 + 0.5;
  const auto field = single_partition_field(rows);
  const auto pset = partition_regular(field.grid, {200, 1});

  ReduceOptions options;
  options.variance_target = 0.999;
  options.plan.rate_random = 0.2;

  SUBCASE("float64 storage reproduces it to 1e-6") {
    options.precision = Dtype::f64;
    const auto bundle = reduce(field, pset, options);
    const auto report = correlation(bundle);
    const Eigen::MatrixXd reference = oracle::covariance(rows);
    CHECK((report.cov[0] - reference).norm() / reference.norm() < 1e-6);
  }

  SUBCASE("float32 storage reproduces it to 1e-3") {
    options.precision = Dtype::f32;
    const auto bundle = reduce(field, pset, options);
    const auto report = correlation(bundle);
    const Eigen::MatrixXd reference = oracle::covariance(rows);
    CHECK((report.cov[0] - reference).norm() / reference.norm() < 1e-3);
  }
}

TEST_CASE("duplicated variables correlate perfectly in every partition") {
  auto synth = noisy_field(9);
  synth.field.data.col(5) = synth.field.data.col(0);  // exact duplicate
  const auto bundle = make_bundle(synth.field, 1.0, 0.2, Dtype::f64);
  const auto report = correlation(bundle);
  for (int p = 0; p < bundle.num_partitions(); ++p)
    CHECK(report.cor[static_cast<std::size_t>(p)](0, 5) ==
          doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("correlation matrices are symmetric with unit diagonal in range") {
  const auto synth = noisy_field(10);
  const auto bundle = make_bundle(synth.field, 0.999, 0.2, Dtype::f64);
  const auto report = correlation(bundle);
  for (int p = 0; p < bundle.num_partitions(); ++p) {
    const auto& cor = report.cor[static_cast<std::size_t>(p)];
    CHECK((cor - cor.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    for (int i = 0; i < 6; ++i) {
      CHECK(cor(i, i) == 1.0);
      for (int j = 0; j < 6; ++j) {
        CHECK(cor(i, j) <= 1.0);
        CHECK(cor(i, j) >= -1.0);
      }
    }
  }
}

TEST_CASE("zero-variance variables are flagged undefined, never zeroed") {
  auto synth = noisy_field(11);
  synth.field.data.col(2).setConstant(-3.5);
  const auto bundle = make_bundle(synth.field, 0.999, 0.2, Dtype::f64);
  const auto report = correlation(bundle);
  for (int p = 0; p < bundle.num_partitions(); ++p) {
    CHECK(!report.var_defined[static_cast<std::size_t>(p)][2]);
    CHECK(std::isnan(report.cor[static_cast<std::size_t>(p)](2, 0)));
    CHECK(std::isnan(report.cor[static_cast<std::size_t>(p)](2, 2)));
  }

  const auto map = correlation_map(bundle, "v2", "v0");
  for (std::size_t i = 0; i < map.defined.size(); ++i)
    CHECK(!map.defined[i]);
  CHECK_THROWS_AS(correlation_map(bundle, "nope", "v0"), ConfigError);
}

TEST_CASE("correlation map mirrors the per-partition report") {
  const auto synth = noisy_field(12);
  const auto bundle = make_bundle(synth.field, 0.999, 0.2, Dtype::f64);
  const auto report = correlation(bundle);
  const auto map = correlation_map(bundle, "v0", "v1");
  for (std::size_t i = 0; i < bundle.labels.size(); ++i) {
    const auto p = static_cast<std::size_t>(bundle.labels[i]);
    CHECK(map.field.values[static_cast<Eigen::Index>(i)] ==
          doctest::Approx(report.cor[p](0, 1)));
    CHECK(map.defined[i]);
  }
}

TEST_CASE("standardized bundles answer queries and correlations in raw units") {
  auto synth = noisy_field(20);
  synth.field.data.col(0) *= 4000.0;  // heterogeneous scales
  synth.field.data.col(3) *= 1e-2;

  const auto pset = partition_regular(synth.field.grid, {8, 8});
  ReduceOptions options;
  options.variance_target = 1.0;
  options.plan.rate_random = 1.0;
  options.precision = Dtype::f64;
  options.standardize = true;
  const auto bundle = reduce(synth.field, pset, options);

  // a query equal to a stored row is at distance zero from that row
  const std::int64_t probe = 137;
  QuerySpec spec;
  for (int j = 0; j < 6; ++j)
    spec.values.emplace_back("v" + std::to_string(j),
                             synth.field.data(probe, j));
  const auto result = query(bundle, spec);
  const auto hit = std::find_if(result.items.begin(), result.items.end(),
                                [&](const auto& i) { return i.index == probe; });
  REQUIRE(hit != result.items.end());
  CHECK(hit->distance < 1e-9);

  // correlations are scale-invariant, so the raw-data oracle still applies
  const auto report = correlation(bundle);
  const auto lists = partition_view(bundle).build_point_lists();
  for (std::size_t p = 0; p < lists.size(); ++p) {
    const Eigen::MatrixXd cov =
        oracle::covariance(gather_rows(synth.field, lists[p]));
    const double reference = cov(0, 3) / std::sqrt(cov(0, 0) * cov(3, 3));
    CHECK(report.cor[p](0, 3) == doctest::Approx(reference).epsilon(1e-8));
    // covariance comes back in raw units as well
    CHECK(report.cov[p](0, 3) ==
          doctest::Approx(cov(0, 3)).epsilon(1e-6));
  }
}

TEST_CASE("hurricane-analog query lights up a ring around the eye") {
  // radial pressure/temperature/wind profiles tuned so all three query
  // values are met together near radius 8
  const int side = 64;
  MultivariateField field;
  field.grid.dims = {side, side};
  field.data.resize(side * side, 3);
  field.var_names = {"pressure", "temperature", "wind"};
  field.var_units = {"Pa", "C", "m/s"};
  Rng rng(4242);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double r = std::hypot(x - 32.0, y - 32.0);
      const Eigen::Index i = y * side + x;
      field.data(i, 0) = -1100.0 * std::exp(-(r / 25.9) * (r / 25.9)) +
                         rng.normal() * 2.0;
      field.data(i, 1) =
          25.0 - 33.2 * std::exp(-(r / 15.0) * (r / 15.0)) + rng.normal() * 0.1;
      field.data(i, 2) = 20.0 * (r / 8.0) * std::exp(1.0 - r / 8.0) +
                         rng.normal() * 0.1;
    }

  const auto pset = partition_regular(field.grid, {16, 16});
  ReduceOptions options;
  options.variance_target = 1.0;  // q = d keeps distances exact
  options.plan.rate_random = 0.3;
  options.plan.seed = 5;
  options.precision = Dtype::f64;
  const auto bundle = reduce(field, pset, options);

  QuerySpec spec;
  spec.values = {{"pressure", -1000.0}, {"temperature", 0.0}, {"wind", 20.0}};
  const auto result = query(bundle, spec);
  REQUIRE(!result.items.empty());

  std::vector<std::pair<double, double>> dist_radius;
  for (const auto& item : result.items) {
    const auto c = bundle.grid.coords(item.index);
    dist_radius.emplace_back(item.distance,
                             std::hypot(c[0] - 32.0, c[1] - 32.0));
  }
  std::sort(dist_radius.begin(), dist_radius.end());

  // the closest 5% of samples concentrate on an annulus: mean radius near
  // the construction's ring, small spread, and no eye-center points
  const std::size_t k = dist_radius.size() / 20;
  REQUIRE(k >= 10);
  double mean_r = 0;
  for (std::size_t i = 0; i < k; ++i) mean_r += dist_radius[i].second;
  mean_r /= static_cast<double>(k);
  double var_r = 0;
  double min_r = 1e300;
  for (std::size_t i = 0; i < k; ++i) {
    var_r += (dist_radius[i].second - mean_r) *
             (dist_radius[i].second - mean_r);
    min_r = std::min(min_r, dist_radius[i].second);
  }
  const double spread = std::sqrt(var_r / static_cast<double>(k));
  CHECK(mean_r > 4.0);
  CHECK(mean_r < 14.0);
  CHECK(spread < 0.4 * mean_r);
  CHECK(min_r > 2.0);
}

TEST_CASE("correlation map from the bundle matches the raw-data map") {
  const auto synth = noisy_field(21);
  const auto bundle = make_bundle(synth.field, 0.999, 0.2, Dtype::f64);
  const auto map = correlation_map(bundle, "v1", "v4");

  const auto lists = partition_view(bundle).build_point_lists();
  for (std::size_t p = 0; p < lists.size(); ++p) {
    const Eigen::MatrixXd cov =
        oracle::covariance(gather_rows(synth.field, lists[p]));
    const double reference = cov(1, 4) / std::sqrt(cov(1, 1) * cov(4, 4));
    // any point of the partition carries its value
    const auto idx = static_cast<Eigen::Index>(lists[p][0]);
    CHECK(map.field.values[idx] == doctest::Approx(reference).epsilon(1e-6));
  }
}

TEST_CASE("reconstruction honors partition filters and index order") {
  const auto synth = noisy_field(13);
  const auto bundle = make_bundle(synth.field, 0.999, 0.2, Dtype::f64);
  const std::vector<int> filter{2, 5};
  const auto recon = reconstruct_samples(bundle, &filter);
  CHECK(!recon.indices.empty());
  for (std::size_t i = 0; i < recon.indices.size(); ++i) {
    CHECK((recon.partition_ids[i] == 2 || recon.partition_ids[i] == 5));
    if (i > 0) CHECK(recon.indices[i] > recon.indices[i - 1]);
  }
  const std::vector<int> bad{99};
  CHECK_THROWS_AS(reconstruct_samples(bundle, &bad), ConfigError);
}
