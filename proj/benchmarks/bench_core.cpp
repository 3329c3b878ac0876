#include <benchmark/benchmark.h>

#include "mccl/ail.hpp"
#include "mccl/gcam.hpp"
#include "mccl/model.hpp"
#include "mccl/ops.hpp"
#include "mccl/rng.hpp"
#include "mccl/trainer.hpp"

namespace {

using namespace mccl;

Tensor32 rand_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  auto t = Tensor32::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<float>(rng.uniform());
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto a = rand_tensor({n, n}, 1);
  auto b = rand_tensor({n, n}, 2);
  for (auto _ : state) {
    auto c = matmul(a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_Conv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  auto x = rand_tensor({8, c, 32, 32}, 3);
  auto w = rand_tensor({c, c, 3, 3}, 4);
  auto bias = rand_tensor({c}, 5);
  for (auto _ : state) {
    auto y = conv2d(x, w, bias, 1, 1);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Conv2d)->Arg(16)->Arg(32)->Arg(64);

void BM_NonlocalConsensus(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0));
  ModelConfig mc;
  Rng init(derive_seed(0, tag_hash("model-init")));
  ParamStore<float> gen;
  build_generator_params(gen, mc, init);
  auto a = rand_tensor({s / 2, 128, 2, 2}, 6);
  auto b = rand_tensor({s / 2, 128, 2, 2}, 7);
  for (auto _ : state) {
    auto out = nonlocal_consensus(a, b, gen);
    benchmark::DoNotOptimize(out.first.data());
  }
}
BENCHMARK(BM_NonlocalConsensus)->Arg(8)->Arg(16)->Arg(32);

void BM_InferenceForward(benchmark::State& state) {
  const int b = static_cast<int>(state.range(0));
  ModelConfig mc;
  Rng init(derive_seed(0, tag_hash("model-init")));
  ParamStore<float> gen;
  build_generator_params(gen, mc, init);
  auto images = rand_tensor({b, 3, 64, 64}, 8);
  std::vector<std::vector<int>> perms{make_split_perm(b, 0)};
  for (auto _ : state) {
    auto out = generator_forward(images, {"bench"}, b, gen, mc, true, perms, false);
    benchmark::DoNotOptimize(out.logits.data());
  }
  state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_InferenceForward)->Arg(2)->Arg(4)->Arg(8);

void BM_Discriminator(benchmark::State& state) {
  Rng init(derive_seed(0, tag_hash("disc-init")));
  ParamStore<float> disc;
  build_discriminator_params(disc, init);
  auto x = rand_tensor({8, 3, 64, 64}, 9);
  for (auto _ : state) {
    auto scores = discriminator_forward(x, disc, false);
    benchmark::DoNotOptimize(scores.data());
  }
}
BENCHMARK(BM_Discriminator);

}  // namespace

BENCHMARK_MAIN();
