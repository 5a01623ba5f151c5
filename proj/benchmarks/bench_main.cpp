#include <benchmark/benchmark.h>

#include <random>

#include "dfm/data.hpp"
#include "dfm/direction_field.hpp"
#include "dfm/frf.hpp"
#include "dfm/model.hpp"

namespace {

dfm::LabelMask phantom_mask(int size) {
  std::mt19937_64 rng(1);
  return dfm::synth_sample(rng, size).label;
}

void BM_DirectionField(benchmark::State& state) {
  const dfm::LabelMask mask = phantom_mask(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(dfm::compute_direction_field(mask));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(mask.size()));
}
BENCHMARK(BM_DirectionField)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_FrfRectify(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const dfm::DirectionField df = dfm::compute_direction_field(phantom_mask(size));
  dfm::Tensor features({64, size, size});
  std::mt19937_64 rng(2);
  std::normal_distribution<float> n;
  for (float& v : features.values()) v = n(rng);
  for (auto _ : state) benchmark::DoNotOptimize(dfm::frf_rectify(features, df, dfm::FrfConfig{5}));
}
BENCHMARK(BM_FrfRectify)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_ModelPredict(benchmark::State& state) {
  dfm::ModelConfig cfg;
  cfg.base_channels = static_cast<int>(state.range(0));
  cfg.depth = 3;
  const dfm::DfmModel model(cfg, 0);
  const dfm::Tensor image({1, 1, 64, 64}, 0.5f);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(image));
}
BENCHMARK(BM_ModelPredict)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  dfm::ModelConfig cfg;
  cfg.base_channels = 8;
  cfg.depth = 3;
  dfm::DfmModel model(cfg, 0);
  const dfm::Tensor images({8, 1, 64, 64}, 0.5f);
  for (auto _ : state) {
    const dfm::ModelOutputs out = model.forward(images);
    model.zero_grad();
    model.backward({out.initial_logits, out.direction_field, out.final_logits});
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
