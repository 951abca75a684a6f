#include <benchmark/benchmark.h>

#include "heintfl/dataset.hpp"
#include "heintfl/nn.hpp"

namespace {

using namespace heintfl;

void BM_ForwardBackwardToyCnn(benchmark::State& state) {
  const auto spec = nn::toy_cnn(1, 8, 8, 4);
  const auto params = nn::init_params(spec, 1);
  const auto images = data::make_toy_dataset(4, 8, 8, 5);
  Tensor batch = Tensor::zeros({static_cast<int>(state.range(0)), 1, 8, 8});
  std::vector<int> labels;
  for (int i = 0; i < state.range(0); ++i) {
    std::copy(images[i].pixels.values.begin(), images[i].pixels.values.end(),
              batch.values.begin() + i * 64);
    labels.push_back(images[i].label);
  }
  for (auto _ : state) {
    nn::ForwardCache cache;
    nn::forward(spec, params, batch, &cache);
    nn::Gradient grad;
    benchmark::DoNotOptimize(nn::backward(spec, params, cache, labels, grad));
  }
}
BENCHMARK(BM_ForwardBackwardToyCnn)->Arg(1)->Arg(32);

void BM_TrainLocalEpoch(benchmark::State& state) {
  const auto spec = nn::toy_cnn(1, 8, 8, 4);
  auto params = nn::init_params(spec, 1);
  const auto images = data::make_toy_dataset(4, 32, 8, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nn::train_local(spec, params, images, {1, 32, 0.05}, 9));
  }
}
BENCHMARK(BM_TrainLocalEpoch);

void BM_LenetForward32(benchmark::State& state) {
  const auto spec = nn::lenet_lite(3, 32, 32, 10);
  const auto params = nn::init_params(spec, 1);
  Tensor batch = Tensor::zeros({8, 3, 32, 32});
  for (auto _ : state) {
    benchmark::DoNotOptimize(nn::forward(spec, params, batch));
  }
}
BENCHMARK(BM_LenetForward32);

}  // namespace
