#include <benchmark/benchmark.h>

#include "heintfl/metrics.hpp"
#include "heintfl/rng.hpp"

namespace {

using namespace heintfl;

Tensor random_image(int edge, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t = Tensor::zeros({1, edge, edge});
  for (auto& v : t.values) v = rng.uniform();
  return t;
}

void BM_Uqi(benchmark::State& state) {
  const auto a = random_image(static_cast<int>(state.range(0)), 1);
  const auto b = random_image(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(attack::uqi(a, b));
}
BENCHMARK(BM_Uqi)->Arg(8)->Arg(32);

void BM_Msssim(benchmark::State& state) {
  const auto a = random_image(static_cast<int>(state.range(0)), 1);
  const auto b = random_image(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(attack::msssim(a, b));
}
BENCHMARK(BM_Msssim)->Arg(8)->Arg(32);

void BM_Vif(benchmark::State& state) {
  const auto a = random_image(static_cast<int>(state.range(0)), 1);
  const auto b = random_image(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(attack::vif(a, b));
}
BENCHMARK(BM_Vif)->Arg(8)->Arg(32);

}  // namespace
