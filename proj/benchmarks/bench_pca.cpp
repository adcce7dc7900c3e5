#include <benchmark/benchmark.h>

#include "mvred/pca.hpp"
#include "mvred/rng.hpp"

using namespace mvred;

namespace {

RowMatrixXd random_matrix(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  RowMatrixXd x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

void BM_fit_pca(benchmark::State& state) {
  const auto x = random_matrix(state.range(0), state.range(1), 1);
  for (auto _ : state) {
    auto model = fit_pca(x);
    benchmark::DoNotOptimize(model.ev.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_fit_pca)
    ->Args({256, 8})
    ->Args({4096, 8})
    ->Args({4096, 32})
    ->Args({65536, 16});

void BM_project_reconstruct(benchmark::State& state) {
  const auto x = random_matrix(state.range(0), 16, 2);
  auto model = fit_pca(x);
  model.q = select_q(model, 0.999);
  for (auto _ : state) {
    const auto w = project(model, x);
    const auto back = reconstruct(model, w);
    benchmark::DoNotOptimize(back.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_project_reconstruct)->Arg(4096)->Arg(65536);

}  // namespace
