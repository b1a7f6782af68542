// Throughput of the hot paths: convolution, the style layer, a full
// training step and batched open-set inference.

#include <benchmark/benchmark.h>

#include <random>

#include "osdg/data.hpp"
#include "osdg/evaluation.hpp"
#include "osdg/ops.hpp"
#include "osdg/style_uncertainty.hpp"
#include "osdg/trainer.hpp"

using namespace osdg;

namespace {

Tensor<float> noise(Shape shape, std::uint64_t seed) {
  Tensor<float> t(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto& v : t.storage()) v = n(rng);
  return t;
}

void BM_Conv3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const auto x = ag::Var<float>::leaf(noise({16, c, 32, 32}, 1));
  const auto w = ag::Var<float>::leaf(noise({c, c, 3, 3}, 2));
  const auto b = ag::Var<float>::leaf(Tensor<float>({c}));
  for (auto _ : state) {
    auto y = ag::conv2d(x, w, b, 1);
    benchmark::DoNotOptimize(y.value().storage().data());
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_GpsaLayer(benchmark::State& state) {
  const FeatureMap<float> z(noise({32, 64, 16, 16}, 3), "stage1");
  style::GlobalUncertainty gu(64, 0.8);
  style::Rng rng(4);
  for (auto _ : state) {
    auto out = style::gpsa_layer(z, gu, style::Mode::train, 1.0, rng);
    benchmark::DoNotOptimize(out.data.storage().data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_GpsaLayer)->Unit(benchmark::kMicrosecond);

struct StepFixture {
  data::Dataset ds;
  data::Normalization norm;
  train::Batch<float> batch;

  explicit StepFixture(const train::AblationSwitches& sw) {
    data::SyntheticSpec spec;
    spec.domains = data::default_domains();
    spec.domains.resize(2);
    spec.unknown_classes = {};
    spec.samples_per_class_per_domain = 4;
    ds = data::generate_synthetic(spec);
    norm = data::compute_normalization(ds.samples);
    std::vector<const SampleRecord*> members;
    for (const auto& s : ds.samples) members.push_back(&s);
    train::BranchInputs inputs;
    inputs.fill = norm.mean;
    std::mt19937_64 rng(0);
    batch = train::make_batch<float>(members, ds.labels, inputs, norm, sw, rng);
  }
};

void run_steps(benchmark::State& state, const train::AblationSwitches& sw) {
  StepFixture fx(sw);
  TrainConfig cfg;
  model::Model<float> m({3, {16, 32, 64}, 4}, cfg.gpsa_stages, 0);
  auto gpsa = m.make_gpsa_states(0.8);
  train::Sgd<float> opt(cfg.momentum, cfg.weight_decay);
  style::Rng rng(0);
  for (auto _ : state) benchmark::DoNotOptimize(train::train_step(fx.batch, m, gpsa, cfg, sw, opt, 0.01, rng));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(fx.batch.labels.size()));
}

void BM_TrainStepBaseline(benchmark::State& state) { run_steps(state, train::ce_only()); }
void BM_TrainStepFull(benchmark::State& state) { run_steps(state, train::full_method()); }
BENCHMARK(BM_TrainStepBaseline)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStepFull)->Unit(benchmark::kMillisecond);

void BM_Decide(benchmark::State& state) {
  const auto labels = make_label_space({"a", "b", "c", "d", "e", "f", "g"});
  const auto logits = noise({1024, 7}, 5);
  std::vector<double> row(7);
  for (auto _ : state) {
    int unknown = 0;
    for (int i = 0; i < 1024; ++i) {
      for (int k = 0; k < 7; ++k) row[k] = logits[static_cast<std::size_t>(i) * 7 + k];
      unknown += eval::decide(row, labels).decision == labels.unknown_token();
    }
    benchmark::DoNotOptimize(unknown);
  }
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_Decide)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
