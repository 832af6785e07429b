#include <benchmark/benchmark.h>

#include "srda/ops.hpp"
#include "srda/param_store.hpp"

namespace {

using srda::Shape;
using srda::Tensor;

Tensor random(const Shape& s, std::uint64_t seed, bool grad = false) {
  Tensor t = srda::he_uniform(s, 9, seed);
  if (grad) t.set_requires_grad(true);
  return t;
}

// args: batch, channels in, channels out, extent, kernel, stride
void BM_Conv2dForward(benchmark::State& state) {
  const auto n = state.range(0), cin = state.range(1), cout = state.range(2), hw = state.range(3), k = state.range(4),
             s = state.range(5);
  const Tensor x = random({n, cin, hw, hw}, 1);
  const Tensor w = random({cout, cin, k, k}, 2);
  srda::NoGradGuard no_grad;
  std::int64_t out = 0;
  for (auto _ : state) {
    Tensor y = srda::conv2d(x, w, std::nullopt, {s, (k - 1) / 2, 1});
    out = y.shape().h;
    benchmark::DoNotOptimize(y);
  }
  state.counters["GFLOP/s"] = benchmark::Counter(static_cast<double>(2 * n * cout * out * out * cin * k * k),
                                                 benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Conv2dForward)
    ->Args({4, 16, 16, 32, 3, 1})
    ->Args({4, 64, 128, 32, 4, 2})
    ->Args({4, 128, 256, 16, 4, 2})
    ->Args({4, 256, 512, 8, 4, 2})
    ->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto n = state.range(0), cin = state.range(1), cout = state.range(2), hw = state.range(3), k = state.range(4),
             s = state.range(5);
  const Tensor x = random({n, cin, hw, hw}, 1, true);
  const Tensor w = random({cout, cin, k, k}, 2, true);
  for (auto _ : state) {
    Tensor y = srda::sum(srda::conv2d(x, w, std::nullopt, {s, (k - 1) / 2, 1}));
    y.backward();
  }
}
BENCHMARK(BM_Conv2dBackward)
    ->Args({4, 16, 16, 32, 3, 1})
    ->Args({4, 64, 128, 32, 4, 2})
    ->Args({4, 128, 256, 16, 4, 2})
    ->Args({4, 256, 512, 8, 4, 2})
    ->Unit(benchmark::kMillisecond);

void BM_ConvTranspose2d(benchmark::State& state) {
  const auto n = state.range(0), cin = state.range(1), cout = state.range(2), hw = state.range(3);
  const Tensor x = random({n, cin, hw, hw}, 1, true);
  const Tensor w = random({cin, cout, 4, 4}, 2, true);
  for (auto _ : state) {
    Tensor y = srda::sum(srda::conv_transpose2d(x, w, std::nullopt, 2, 1));
    y.backward();
  }
}
BENCHMARK(BM_ConvTranspose2d)->Args({4, 64, 32, 32})->Args({4, 128, 64, 80})->Unit(benchmark::kMillisecond);

void BM_ResizeBicubic(benchmark::State& state) {
  const auto hw = state.range(0);
  const Tensor x = random({4, 3, hw, hw}, 1);
  srda::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(srda::resize(x, hw * 2, hw * 2, srda::ResizeMode::kBicubic));
}
BENCHMARK(BM_ResizeBicubic)->Arg(32)->Arg(160)->Unit(benchmark::kMillisecond);

}  // namespace
