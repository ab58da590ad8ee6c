#include <benchmark/benchmark.h>

#include "octevo/rng.hpp"
#include "octevo/tensor.hpp"

using namespace octevo;

namespace {

Tensor randu(Shape s, Rng& r) {
  Tensor t = Tensor::raw(std::move(s));
  for (int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = Real(r.uniform(-1.0, 1.0));
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const int64_t c = state.range(0), hw = state.range(1);
  Rng r(1);
  Tensor x = randu({c, hw, hw}, r);
  Tensor k = randu({c, c, 3, 3}, r);
  Tensor b = randu({c}, r);
  NoGradGuard ng;
  for (auto _ : state) {
    Tensor y = conv2d(x, k, b, 1, 1);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * c * c * 9 * hw * hw);
}
BENCHMARK(BM_Conv2dForward)->Args({32, 64})->Args({64, 32})->Args({128, 16});

void BM_Conv2dTrainStep(benchmark::State& state) {
  const int64_t c = state.range(0), hw = state.range(1);
  Rng r(2);
  Tensor x = randu({c, hw, hw}, r);
  for (auto _ : state) {
    Tensor k = Tensor::from({c, c, 3, 3}, std::vector<Real>(c * c * 9, 0.01),
                            true);
    Tensor b = Tensor::zeros({c}, true);
    Tensor loss = mean(conv2d(x, k, b, 1, 1));
    loss.backward();
    benchmark::DoNotOptimize(k.grad().data());
  }
}
BENCHMARK(BM_Conv2dTrainStep)->Args({32, 32})->Args({64, 16});

void BM_Matmul(benchmark::State& state) {
  const int64_t n = state.range(0);
  Rng r(3);
  Tensor a = randu({n, n}, r), b = randu({n, n}, r);
  NoGradGuard ng;
  for (auto _ : state) {
    Tensor y = matmul(a, b);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(128)->Arg(256)->Arg(512);

void BM_Softmax(benchmark::State& state) {
  const int64_t n = state.range(0);
  Rng r(4);
  Tensor a = randu({n, n}, r);
  NoGradGuard ng;
  for (auto _ : state) {
    Tensor y = softmax(a, 1);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Softmax)->Arg(64)->Arg(256);

}  // namespace

int main(int argc, char** argv) {
  benchmark::Initialize(&argc, argv);
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
