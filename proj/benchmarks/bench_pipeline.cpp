#include <benchmark/benchmark.h>

#include "mvred/bundle.hpp"
#include "mvred/partition.hpp"
#include "mvred/sampling.hpp"
#include "mvred/synthetic.hpp"

using namespace mvred;

namespace {

SyntheticField bench_field(int side, int vars) {
  SyntheticSpec spec;
  spec.grid.dims = {side, side};
  spec.num_vars = vars;
  spec.n_regions = 4;
  spec.latent_dims = {2};
  spec.noise_sigma = 0.05;
  spec.seed = 3;
  return gen_synthetic(spec);
}

void BM_partition_regular(benchmark::State& state) {
  const auto synth = bench_field(static_cast<int>(state.range(0)), 8);
  for (auto _ : state) {
    auto pset = partition_regular(synth.field.grid, {16, 16});
    benchmark::DoNotOptimize(pset.labels.data());
  }
}
BENCHMARK(BM_partition_regular)->Arg(128)->Arg(256);

void BM_partition_kdtree(benchmark::State& state) {
  const auto synth = bench_field(static_cast<int>(state.range(0)), 8);
  for (auto _ : state) {
    auto pset = partition_kdtree(synth.field, {2, 0.99, 8});
    benchmark::DoNotOptimize(pset.labels.data());
  }
}
BENCHMARK(BM_partition_kdtree)->Arg(128)->Arg(256);

void BM_partition_slic(benchmark::State& state) {
  const auto synth = bench_field(static_cast<int>(state.range(0)), 8);
  SlicParams params;
  params.n_superpixels = 256;
  for (auto _ : state) {
    auto pset = partition_slic(synth.field, params);
    benchmark::DoNotOptimize(pset.labels.data());
  }
}
BENCHMARK(BM_partition_slic)->Arg(128)->Arg(256);

void BM_sample_feature(benchmark::State& state) {
  const auto synth = bench_field(128, 4);
  const auto model = fit_pca(synth.field.data);
  const Eigen::VectorXd pc1 = project(model, synth.field.data, 1).col(0);
  for (auto _ : state) {
    auto set = sample_feature(pc1, 0.05, 32, 7);
    benchmark::DoNotOptimize(set.indices.data());
  }
  state.SetItemsProcessed(state.iterations() * pc1.size());
}
BENCHMARK(BM_sample_feature);

void BM_reduce_pipeline(benchmark::State& state) {
  const auto synth = bench_field(static_cast<int>(state.range(0)), 8);
  const auto pset = partition_regular(synth.field.grid, {16, 16});
  ReduceOptions options;
  options.plan.rate_random = 0.025;
  options.plan.rate_feature = 0.025;
  for (auto _ : state) {
    auto bundle = reduce(synth.field, pset, options);
    benchmark::DoNotOptimize(bundle.parts.data());
  }
  state.SetItemsProcessed(state.iterations() * synth.field.num_points());
}
BENCHMARK(BM_reduce_pipeline)->Arg(128)->Arg(256);

}  // namespace
