#include <benchmark/benchmark.h>

#include "heintfl/masked_model.hpp"
#include "heintfl/rng.hpp"

namespace {

using namespace heintfl;

crypto::SchemeParams scheme_for(int bits) {
  crypto::SchemeParams p;
  p.modulus_bits = bits;
  return p;
}

void BM_EncryptSlot(benchmark::State& state) {
  const auto key = crypto::keygen(11, scheme_for(static_cast<int>(state.range(0))));
  Rng rng(42);
  for (auto _ : state) {
    benchmark::DoNotOptimize(crypto::encrypt_integer(*key.pub, 123456789, rng));
  }
}
BENCHMARK(BM_EncryptSlot)->Arg(256)->Arg(512)->Arg(1024);

void BM_DecryptSlot(benchmark::State& state) {
  const auto key = crypto::keygen(11, scheme_for(static_cast<int>(state.range(0))));
  Rng rng(42);
  const auto c = crypto::encrypt_integer(*key.pub, 123456789, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(crypto::decrypt_integer(*key.pub, key.sec, c, 80));
  }
}
BENCHMARK(BM_DecryptSlot)->Arg(256)->Arg(512)->Arg(1024);

void BM_AddWeightedModel(benchmark::State& state) {
  const auto key = crypto::keygen(11, scheme_for(256));
  const std::int64_t dim = state.range(0);
  nn::ModelParams params;
  params.flat.assign(static_cast<std::size_t>(dim), 0.25);
  const auto mask = crypto::build_mask(0.2, dim, nullptr, 3);
  const auto a = crypto::encrypt_masked(params, mask, key, 1);
  const auto b = crypto::encrypt_masked(params, mask, key, 2);
  for (auto _ : state) {
    auto acc = crypto::zero_accumulator(a);
    acc = crypto::add_weighted(acc, a, 0.5);
    acc = crypto::add_weighted(acc, b, 0.5);
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_AddWeightedModel)->Arg(1000);

void BM_SerializeMasked(benchmark::State& state) {
  const auto key = crypto::keygen(11, scheme_for(256));
  nn::ModelParams params;
  params.flat.assign(2000, 0.25);
  const auto mask = crypto::build_mask(0.2, 2000, nullptr, 3);
  const auto msg = crypto::encrypt_masked(params, mask, key, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(crypto::serialize_masked(msg));
  }
}
BENCHMARK(BM_SerializeMasked);

}  // namespace
