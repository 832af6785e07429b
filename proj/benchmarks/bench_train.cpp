#include <benchmark/benchmark.h>

#include "srda/random.hpp"
#include "srda/train.hpp"

namespace {

srda::TrainingBatch synthetic_batch(std::int64_t n, std::int64_t low, int classes, std::uint64_t seed) {
  srda::Rng rng(seed);
  auto image = [&](std::int64_t hw) {
    std::vector<float> v(static_cast<std::size_t>(n * 3 * hw * hw));
    for (auto& x : v) x = static_cast<float>(rng.uniform());
    return srda::Tensor::from_data({n, 3, hw, hw}, std::move(v));
  };
  srda::TrainingBatch b;
  b.source = image(low);
  b.target = image(2 * low);
  b.target_down = image(low);
  b.source_labels = srda::LabelMap(n, low, low);
  for (auto& l : b.source_labels.values) l = static_cast<std::uint8_t>(rng.index(classes));
  return b;
}

srda::ModelConfig desk_model() {
  srda::ModelConfig m;
  m.num_classes = 4;
  m.base_channels = 16;
  return m;
}

void BM_PretrainStep(benchmark::State& state) {
  srda::TrainConfig t;
  srda::Trainer trainer(desk_model(), t);
  const auto batch = synthetic_batch(4, 32, 4, 1);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.pretrain_step(batch));
}
BENCHMARK(BM_PretrainStep)->Unit(benchmark::kMillisecond);

// arg: 0 no classifiers, 1 PDC, 2 ODC, 3 both
void BM_AdversarialStep(benchmark::State& state) {
  srda::TrainConfig t;
  t.flags.use_pdc = state.range(0) & 1;
  t.flags.use_odc = state.range(0) & 2;
  srda::Trainer trainer(desk_model(), t);
  const auto batch = synthetic_batch(4, 32, 4, 1);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.adversarial_step(batch));
}
BENCHMARK(BM_AdversarialStep)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
