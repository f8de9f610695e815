#include <benchmark/benchmark.h>

#include "saad/dataset.hpp"
#include "saad/metrics.hpp"
#include "saad/models.hpp"
#include "saad/ops.hpp"
#include "saad/train.hpp"

using namespace saad;

namespace {

Tensor filled(const Shape& shape, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)));
  for (auto& v : d) v = rng.uniform(-1.0, 1.0);
  return Tensor::from_data(shape, std::move(d));
}

// Args: channels, spatial size, dilation, precision (0 = f64, 1 = f32).
void BM_Conv3x3Forward(benchmark::State& state) {
  const int64_t c = state.range(0), s = state.range(1), dil = state.range(2);
  ops::PrecisionGuard guard(state.range(3) ? ops::ComputePrecision::f32 : ops::ComputePrecision::f64);
  const Tensor x = filled({8, c, s, s}, 1), w = filled({c, c, 3, 3}, 2), b = filled({c}, 3);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, {1, dil, dil}));
  state.SetItemsProcessed(state.iterations() * 8 * c * c * 9 * s * s);
}
BENCHMARK(BM_Conv3x3Forward)
    ->Args({32, 64, 1, 0})
    ->Args({32, 64, 1, 1})
    ->Args({64, 32, 1, 0})
    ->Args({128, 16, 2, 0})
    ->Unit(benchmark::kMillisecond);

void BM_Conv3x3Backward(benchmark::State& state) {
  const int64_t c = state.range(0), s = state.range(1);
  const Tensor x = filled({8, c, s, s}, 1), w = filled({c, c, 3, 3}, 2);
  const Tensor g = filled({8, c, s, s}, 4);
  NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::conv2d_input_grad(g, w, s, s, {1, 1, 1}));
    benchmark::DoNotOptimize(ops::conv2d_weight_grad(x, g, 3, 3, {1, 1, 1}));
  }
}
BENCHMARK(BM_Conv3x3Backward)->Args({32, 64})->Args({64, 32})->Unit(benchmark::kMillisecond);

void BM_GeneratorForward(benchmark::State& state) {
  GeneratorConfig gc;
  gc.image_size = state.range(0);
  const ParamStore p = init_generator(gc, {1});
  const Tensor x = filled({8, 3, gc.image_size, gc.image_size}, 5);
  const Mask m = Mask::zeros(8, gc.image_size, gc.image_size);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(generator_forward(gc, p, x, m));
}
BENCHMARK(BM_GeneratorForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

// One discriminator and one generator update at batch 8.
void BM_TrainStep(benchmark::State& state) {
  TrainConfig c;
  c.image_size = state.range(0);
  c.precision = state.range(1) ? ops::ComputePrecision::f32 : ops::ComputePrecision::f64;
  c = resolve(c);
  SyntheticDatasetParams dp;
  dp.n_train = 8;
  dp.n_test = 0;
  dp.image_size = c.image_size;
  const Tensor batch = stack_images(load_split(make_synthetic_dataset(dp), Split::train));
  TrainState s = make_train_state(c);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(s, batch));
}
BENCHMARK(BM_TrainStep)->Args({32, 0})->Args({64, 0})->Args({64, 1})->Unit(benchmark::kMillisecond);

void BM_Ssim64(benchmark::State& state) {
  const Tensor x = filled({1, 3, 64, 64}, 6), y = filled({1, 3, 64, 64}, 7);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(x, y));
}
BENCHMARK(BM_Ssim64)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
