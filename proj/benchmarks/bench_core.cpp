#include <benchmark/benchmark.h>

#include <random>

#include "abhe/correlation.hpp"
#include "abhe/geometry.hpp"
#include "abhe/model.hpp"
#include "abhe/swin.hpp"

using namespace abhe;

namespace {

Tensor random_tensor(Shape shape, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d;
  std::vector<float> v(static_cast<std::size_t>(shape_numel(shape)));
  for (float& x : v) x = d(rng);
  return Tensor::from_vector(std::move(shape), std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const int64_t n = state.range(0);
  const Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_Conv3x3(benchmark::State& state) {
  const int64_t c = state.range(0);
  const Tensor x = random_tensor({8, 32, 32, c}, 1), k = random_tensor({3, 3, c, c}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, 1, Padding::kSame));
}
BENCHMARK(BM_Conv3x3)->Arg(8)->Arg(32);

void BM_CorrelationVolume(benchmark::State& state) {
  const int64_t side = state.range(0);
  const Tensor fa = random_tensor({8, side, side, 16}, 1), fb = random_tensor({8, side, side, 16}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(correlation_volume(fa, fb));
}
BENCHMARK(BM_CorrelationVolume)->Arg(8)->Arg(16)->Arg(32);

void BM_SwinBlockShifted(benchmark::State& state) {
  ParameterStore store;
  Rng rng(1);
  swin::SwinConfig c;
  c.embed_dim = 16;
  c.num_heads = 2;
  c.window = 4;
  c.shift = 2;
  const auto block = swin::SwinBlock::create(store, "b", c, rng);
  const Tensor x = random_tensor({8, 16, 16, 16}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(block(x));
}
BENCHMARK(BM_SwinBlockShifted);

void BM_WarpBatch(benchmark::State& state) {
  const Tensor img = random_tensor({8, 64, 64, 1}, 1);
  const Tensor h = geometry::solve_dlt(scale(random_tensor({8, 8}, 2), 2.0f), 64, 64);
  for (auto _ : state) benchmark::DoNotOptimize(geometry::warp(img, h));
}
BENCHMARK(BM_WarpBatch);

void BM_TrainStep(benchmark::State& state) {
  ModelConfig mc;
  const AbheNet net = AbheNet::create(mc, 0);
  const Tensor a = random_tensor({8, 64, 64, 1}, 1), b = random_tensor({8, 64, 64, 1}, 2);
  Tape tape;
  for (auto _ : state) {
    tape.reset();
    LossTerms t;
    {
      Tape::Scope scope(tape);
      t = net.loss(net.forward(a, b), a, b, LossWeights{});
    }
    tape.backward(t.total);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
