#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>
#include <vector>

#include "mvred/bundle.hpp"
#include "mvred/crc64.hpp"
#include "mvred/error.hpp"
#include "mvred/parallel.hpp"
#include "mvred/posthoc.hpp"
#include "mvred/rng.hpp"
#include "mvred/synthetic.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mvred;

namespace {

SyntheticField small_field(std::uint64_t seed, double noise = 0.05) {
  SyntheticSpec spec;
  spec.grid.dims = {32, 32};
  spec.num_vars = 6;
  spec.n_regions = 4;
  spec.latent_dims = {1, 2, 3, 2};
  spec.noise_sigma = noise;
  spec.seed = seed;
  return gen_synthetic(spec);
}

ReducedBundle small_bundle(const MultivariateField& field, Dtype precision,
                           double p = 0.999, double rate = 0.2) {
  const auto pset = partition_regular(field.grid, {8, 8});
  ReduceOptions options;
  options.variance_target = p;
  options.plan.rate_random = rate / 2;
  options.plan.rate_feature = rate / 2;
  options.plan.seed = 7;
  options.precision = precision;
  return reduce(field, pset, options);
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  REQUIRE(in.good());
  std::vector<char> data(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(data.data(), static_cast<std::streamsize>(data.size()));
  return data;
}

void write_file(const std::filesystem::path& path,
                const std::vector<char>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

}  // namespace

TEST_CASE("crc64 reference vector") {
  const char msg[] = "123456789";
  CHECK(crc64(msg, 9) == 0x995DC9BBDF1939FAull);
}

TEST_CASE("reduce assembles a consistent bundle") {
  const auto synth = small_field(1);
  const auto bundle = small_bundle(synth.field, Dtype::f64);
  bundle.validate();
  CHECK(bundle.num_partitions() == 16);
  CHECK(bundle.num_vars() == 6);

  // every partition respects its variance target on its own rows
  for (const auto& part : bundle.parts) {
    CHECK(part.model.q >= 1);
    CHECK(explained_variance_ratio(part.model, part.model.q) >=
          0.999 - 1e-12);
    // 20% of 64 points, split across the two samplers
    CHECK(part.sample_indices.size() == 13);
  }
}

TEST_CASE("reduce recovers planted ranks per partition") {
  SyntheticSpec spec;
  spec.grid.dims = {64, 64};
  spec.num_vars = 8;
  spec.n_regions = 4;
  spec.latent_dims = {1, 2, 3, 4};
  spec.noise_sigma = 0.0;
  spec.seed = 13;
  const auto synth = gen_synthetic(spec);
  const auto pset = partition_regular(synth.field.grid, {32, 32});

  ReduceOptions options;
  options.variance_target = 0.999;
  options.plan.rate_random = 0.05;
  options.precision = Dtype::f64;
  const auto bundle = reduce(synth.field, pset, options);

  // quadrant blocks coincide with the generator regions
  for (int p = 0; p < 4; ++p)
    CHECK(bundle.parts[static_cast<std::size_t>(p)].model.q ==
          synth.latent_dims[static_cast<std::size_t>(p)]);
}

TEST_CASE("lossless configuration reconstructs exactly") {
  const auto synth = small_field(2, 0.1);
  const auto pset = partition_regular(synth.field.grid, {8, 8});
  ReduceOptions options;
  options.variance_target = 1.0;
  options.plan.rate_random = 1.0;
  options.precision = Dtype::f64;
  const auto bundle = reduce(synth.field, pset, options);

  const auto recon = reconstruct_samples(bundle);
  REQUIRE(recon.indices.size() ==
          static_cast<std::size_t>(synth.field.num_points()));
  double worst = 0;
  for (std::size_t i = 0; i < recon.indices.size(); ++i) {
    const auto row = recon.values.row(static_cast<Eigen::Index>(i));
    const auto truth = synth.field.data.row(recon.indices[i]);
    worst = std::max(worst, (row - truth).norm());
  }
  CHECK(worst / synth.field.data.norm() < 1e-9);
}

TEST_CASE("bundle round trip is bit-identical") {
  TempDir dir("bundle_rt");
  const auto synth = small_field(3);
  const auto bundle = small_bundle(synth.field, Dtype::f32);
  save_bundle(bundle, dir.file("a.mvrb"));

  const auto loaded = load_bundle(dir.file("a.mvrb"));
  save_bundle(loaded, dir.file("b.mvrb"));
  CHECK(read_file(dir.file("a.mvrb")) == read_file(dir.file("b.mvrb")));

  // loaded values match what reduce produced (already quantized)
  for (int p = 0; p < bundle.num_partitions(); ++p) {
    const auto& a = bundle.parts[static_cast<std::size_t>(p)];
    const auto& b = loaded.parts[static_cast<std::size_t>(p)];
    CHECK(a.model.q == b.model.q);
    CHECK(a.model.mu == b.model.mu);
    CHECK(a.model.ev == b.model.ev);
    CHECK(a.model.c_full == b.model.c_full);
    CHECK(a.sample_indices == b.sample_indices);
    CHECK(a.w_s == b.w_s);
  }
}

TEST_CASE("bundle loader rejects damage") {
  TempDir dir("bundle_bad");
  const auto synth = small_field(4);
  const auto bundle = small_bundle(synth.field, Dtype::f32);
  save_bundle(bundle, dir.file("ok.mvrb"));
  auto blob = read_file(dir.file("ok.mvrb"));

  SUBCASE("flipped payload byte fails the checksum") {
    blob[blob.size() / 2] ^= 0x40;
    write_file(dir.file("flip.mvrb"), blob);
    CHECK_THROWS_WITH_AS(load_bundle(dir.file("flip.mvrb")),
                         doctest::Contains("checksum"), IoError);
  }

  SUBCASE("truncated file is rejected") {
    blob.resize(blob.size() - 9);
    write_file(dir.file("trunc.mvrb"), blob);
    CHECK_THROWS_AS(load_bundle(dir.file("trunc.mvrb")), IoError);
  }

  SUBCASE("bad magic is rejected") {
    blob[0] = 'X';
    write_file(dir.file("magic.mvrb"), blob);
    CHECK_THROWS_WITH_AS(load_bundle(dir.file("magic.mvrb")),
                         doctest::Contains("magic"), IoError);
  }

  SUBCASE("future format version is rejected explicitly") {
    // bump the version field, then re-sign the checksum so only the
    // version check can fail
    std::uint32_t version;
    std::memcpy(&version, blob.data() + 4, 4);
    version += 1;
    std::memcpy(blob.data() + 4, &version, 4);
    const std::uint64_t crc = crc64(blob.data(), blob.size() - 8);
    std::memcpy(blob.data() + blob.size() - 8, &crc, 8);
    write_file(dir.file("future.mvrb"), blob);
    CHECK_THROWS_WITH_AS(load_bundle(dir.file("future.mvrb")),
                         doctest::Contains("version"), IoError);
  }
}

TEST_CASE("size report matches the serialized file exactly") {
  TempDir dir("bundle_size");
  const auto synth = small_field(5);
  for (const Dtype precision : {Dtype::f32, Dtype::f64}) {
    const auto bundle = small_bundle(synth.field, precision);
    const auto report = size_report(bundle);
    save_bundle(bundle, dir.file("size.mvrb"));
    const auto actual = static_cast<std::int64_t>(
        std::filesystem::file_size(dir.file("size.mvrb")));
    CHECK(report.reduced_bytes == actual);
    CHECK(report.header_bytes + report.model_bytes + report.index_bytes +
              report.ws_bytes + report.overhead_bytes ==
          report.reduced_bytes);
    CHECK(report.raw_bytes ==
          synth.field.num_points() * synth.field.num_vars() * 8);
    CHECK(report.reduction_ratio ==
          doctest::Approx(static_cast<double>(report.raw_bytes) /
                          report.reduced_bytes));
  }
}

TEST_CASE("model storage grows quadratically with the variable count") {
  SyntheticSpec spec;
  spec.grid.dims = {16, 16};
  spec.num_vars = 6;
  spec.latent_dims = {2};
  spec.noise_sigma = 0.1;
  spec.seed = 21;
  const auto six = gen_synthetic(spec);
  spec.num_vars = 12;
  const auto twelve = gen_synthetic(spec);

  const auto b6 = small_bundle(six.field, Dtype::f32);
  const auto b12 = small_bundle(twelve.field, Dtype::f32);
  const double ratio =
      static_cast<double>(size_report(b12).model_bytes) /
      static_cast<double>(size_report(b6).model_bytes);
  // (d^2 + 2d) scaling: 168/48 = 3.5 for this pair
  CHECK(ratio == doctest::Approx(3.5).epsilon(0.01));
}

TEST_CASE("reduced size never shrinks as p or the rate grows") {
  // storage payload is strictly monotone; the JSON header may wobble by a
  // few bytes as numbers print shorter or longer
  const auto synth = small_field(6, 0.2);
  auto payload = [](const SizeReport& r) {
    return r.model_bytes + r.index_bytes + r.ws_bytes;
  };
  std::int64_t prev = 0, prev_total = 0;
  for (const double p : {0.9, 0.99, 0.999, 1.0}) {
    const auto report =
        size_report(small_bundle(synth.field, Dtype::f32, p, 0.1));
    CHECK(payload(report) >= prev);
    CHECK(report.reduced_bytes >= prev_total - 16);
    prev = payload(report);
    prev_total = report.reduced_bytes;
  }
  prev = 0;
  prev_total = 0;
  for (const double rate : {0.02, 0.1, 0.3, 1.0}) {
    const auto report =
        size_report(small_bundle(synth.field, Dtype::f32, 0.999, rate));
    CHECK(payload(report) >= prev);
    CHECK(report.reduced_bytes >= prev_total - 16);
    prev = payload(report);
    prev_total = report.reduced_bytes;
  }
}

TEST_CASE("kd tree bundles carry more geometry overhead than regular ones") {
  // force the k-d tree down to the same tiling as the regular scheme, so
  // the only difference left is how the geometry is encoded
  SyntheticSpec spec;
  spec.grid.dims = {32, 32};
  spec.num_vars = 6;
  spec.latent_dims = {4};
  spec.noise_sigma = 0.4;
  spec.seed = 31;
  const auto synth = gen_synthetic(spec);

  const auto regular = partition_regular(synth.field.grid, {8, 8});
  const auto kd = partition_kdtree(synth.field, {1, 0.999999, 8});
  REQUIRE(kd.count() == regular.count());

  ReduceOptions options;
  options.variance_target = 0.999;
  options.plan.rate_random = 0.05;
  options.plan.seed = 3;
  const auto size_regular =
      size_report(reduce(synth.field, regular, options)).reduced_bytes;
  const auto size_kd =
      size_report(reduce(synth.field, kd, options)).reduced_bytes;
  CHECK(size_kd > size_regular);
}

TEST_CASE("slic bundles store the label array and round trip") {
  TempDir dir("bundle_slic");
  const auto synth = small_field(7, 0.1);
  SlicParams params;
  params.n_superpixels = 16;
  const auto pset = partition_slic(synth.field, params);

  ReduceOptions options;
  options.plan.rate_random = 0.1;
  options.precision = Dtype::f32;
  const auto bundle = reduce(synth.field, pset, options);
  save_bundle(bundle, dir.file("slic.mvrb"));
  const auto loaded = load_bundle(dir.file("slic.mvrb"));
  CHECK(loaded.labels == bundle.labels);
  CHECK(loaded.scheme == Scheme::Slic);

  // the label array makes the slic header strictly larger than a regular
  // header for the same grid
  const auto regular_bundle =
      reduce(synth.field, partition_regular(synth.field.grid, {8, 8}),
             options);
  CHECK(size_report(bundle).header_bytes >
        size_report(regular_bundle).header_bytes);
}

TEST_CASE("standardized bundles invert their scaling on reconstruction") {
  // variables on wildly different scales
  auto synth = small_field(8, 0.05);
  synth.field.data.col(0) *= 1e6;
  synth.field.data.col(1) *= 1e-3;

  const auto pset = partition_regular(synth.field.grid, {8, 8});
  ReduceOptions options;
  options.variance_target = 1.0;
  options.plan.rate_random = 1.0;
  options.precision = Dtype::f64;
  options.standardize = true;
  const auto bundle = reduce(synth.field, pset, options);
  CHECK(bundle.standardization.enabled);

  const auto recon = reconstruct_samples(bundle);
  double worst = 0;
  for (std::size_t i = 0; i < recon.indices.size(); ++i)
    worst = std::max(
        worst, (recon.values.row(static_cast<Eigen::Index>(i)) -
                synth.field.data.row(recon.indices[i]))
                   .norm() /
                   synth.field.data.row(recon.indices[i]).norm());
  CHECK(worst < 1e-9);

  TempDir dir("bundle_std");
  save_bundle(bundle, dir.file("std.mvrb"));
  const auto loaded = load_bundle(dir.file("std.mvrb"));
  CHECK(loaded.standardization.enabled);
  CHECK(loaded.standardization.mean == bundle.standardization.mean);
  CHECK(loaded.standardization.scale == bundle.standardization.scale);
}

TEST_CASE("randomized configurations round trip and stay self-contained") {
  TempDir dir("bundle_prop");
  Rng rng(5150);
  for (int trial = 0; trial < 12; ++trial) {
    SyntheticSpec spec;
    spec.grid.dims = {static_cast<int>(8 + rng.below(25)),
                      static_cast<int>(8 + rng.below(25))};
    spec.num_vars = static_cast<int>(2 + rng.below(7));
    spec.n_regions = static_cast<int>(1 + rng.below(3));
    spec.latent_dims = {static_cast<int>(rng.below(
        static_cast<std::uint64_t>(spec.num_vars)))};
    spec.noise_sigma = 0.05 * rng.uniform();
    spec.seed = rng.next();
    const auto synth = gen_synthetic(spec);

    PartitionSet pset;
    switch (rng.below(3)) {
      case 0:
        pset = partition_regular(
            synth.field.grid,
            {static_cast<int>(2 + rng.below(8)),
             static_cast<int>(2 + rng.below(8))});
        break;
      case 1:
        pset = partition_kdtree(synth.field,
                                {1 + static_cast<int>(rng.below(2)), 0.99, 2});
        break;
      default: {
        SlicParams params;
        params.n_superpixels = static_cast<int>(1 + rng.below(16));
        pset = partition_slic(synth.field, params);
        break;
      }
    }

    ReduceOptions options;
    options.variance_target = 0.9 + 0.1 * rng.uniform();
    options.plan.rate_random = 0.3 * rng.uniform();
    options.plan.rate_feature = 0.3 * rng.uniform();
    options.plan.seed = rng.next();
    options.precision = rng.below(2) ? Dtype::f32 : Dtype::f64;
    options.standardize = rng.below(2) == 1;
    const auto bundle = reduce(synth.field, pset, options);

    save_bundle(bundle, dir.file("p.mvrb"));
    const auto loaded = load_bundle(dir.file("p.mvrb"));
    save_bundle(loaded, dir.file("q.mvrb"));
    CHECK(read_file(dir.file("p.mvrb")) == read_file(dir.file("q.mvrb")));

    // analyses on the loaded bundle match the in-memory one exactly
    QuerySpec qspec;
    qspec.values = {{"v0", rng.normal()}, {"v1", rng.normal()}};
    const auto a = query(bundle, qspec);
    const auto b = query(loaded, qspec);
    REQUIRE(a.items.size() == b.items.size());
    for (std::size_t i = 0; i < a.items.size(); ++i) {
      CHECK(a.items[i].index == b.items[i].index);
      CHECK(a.items[i].distance == b.items[i].distance);
    }
  }
}

TEST_CASE("the pipeline handles 3D grids under every scheme") {
  SyntheticSpec spec;
  spec.grid.dims = {16, 16, 8};
  spec.num_vars = 5;
  spec.n_regions = 4;
  spec.latent_dims = {1, 2, 2, 3};
  spec.noise_sigma = 0.05;
  spec.seed = 77;
  const auto synth = gen_synthetic(spec);

  SlicParams slic;
  slic.n_superpixels = 16;
  const PartitionSet psets[3] = {
      partition_regular(synth.field.grid, {8, 8, 4}),
      partition_kdtree(synth.field, {2, 0.99, 4}),
      partition_slic(synth.field, slic)};

  TempDir dir("bundle_3d");
  for (const auto& pset : psets) {
    pset.validate();
    ReduceOptions options;
    options.variance_target = 0.999;
    options.plan.rate_random = 0.05;
    options.plan.rate_feature = 0.05;
    options.precision = Dtype::f64;
    const auto bundle = reduce(synth.field, pset, options);
    const auto err = error_report(bundle, synth.field);
    CHECK(err.norm_mv_recon_error <= 0.001 + 1e-8);

    save_bundle(bundle, dir.file("vol.mvrb"));
    const auto loaded = load_bundle(dir.file("vol.mvrb"));
    CHECK(loaded.labels == bundle.labels);

    QuerySpec qspec;
    qspec.values = {{"v0", 0.0}, {"v2", 1.0}};
    const auto result = query(loaded, qspec);
    CHECK(!result.items.empty());
  }
}

TEST_CASE("reduce output does not depend on the worker thread count") {
  TempDir dir("bundle_threads");
  const auto synth = small_field(10, 0.1);
  const auto pset = partition_regular(synth.field.grid, {8, 8});
  ReduceOptions options;
  options.plan.rate_random = 0.05;
  options.plan.rate_feature = 0.05;
  options.plan.seed = 3;

  set_worker_threads(1);
  save_bundle(reduce(synth.field, pset, options), dir.file("serial.mvrb"));
  set_worker_threads(4);
  save_bundle(reduce(synth.field, pset, options), dir.file("parallel.mvrb"));
  set_worker_threads(0);
  CHECK(read_file(dir.file("serial.mvrb")) ==
        read_file(dir.file("parallel.mvrb")));
}

TEST_CASE("zero-rate plans produce model-only bundles") {
  const auto synth = small_field(9, 0.1);
  const auto pset = partition_regular(synth.field.grid, {8, 8});
  ReduceOptions options;
  options.plan.rate_random = 0.0;
  options.plan.rate_feature = 0.0;
  const auto bundle = reduce(synth.field, pset, options);
  for (const auto& part : bundle.parts) {
    CHECK(part.sample_indices.empty());
    CHECK(part.w_s.rows() == 0);
  }
  TempDir dir("bundle_dry");
  save_bundle(bundle, dir.file("dry.mvrb"));
  const auto loaded = load_bundle(dir.file("dry.mvrb"));
  CHECK(loaded.parts[0].sample_indices.empty());
}
