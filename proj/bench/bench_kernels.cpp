#include <benchmark/benchmark.h>

#include <memory>

#include "nerp/engine.hpp"
#include "nerp/reference.hpp"

namespace {

using namespace nerp;

struct Fixture {
  TrainingData data;
  TrainState state;
  FeatureMap features;
  ConditioningContext ctx;
  SampledBatch sampled;
  LossWeights weights;

  explicit Fixture(int rays) {
    const SyntheticScene scene = make_preset("sphere-box");
    TrainConfig tc;
    data = prepare_training_data(scene, 256, 0);
    ModelConfig mc;
    mc.contraction = scene.roi;
    state = init_train_state(mc, tc);
    features = extract_features(state.model, state.tape, data.train_images, data.train_cameras);
    ctx = build_conditioning(state.model, state.tape, features);
    sampled = sample_batch(data, rays, 64, state.rng);
  }
};

Fixture& fixture(int rays) {
  static std::unique_ptr<Fixture> f;
  if (!f || static_cast<int>(f->sampled.batch.size()) != rays) f = std::make_unique<Fixture>(rays);
  return *f;
}

void BM_embed_kernel(benchmark::State& bs) {
  Fixture& f = fixture(16);
  std::vector<Vec3> points;
  for (std::size_t i = 0; i < f.sampled.batch.size(); ++i) {
    for (int j = 0; j < 64; ++j) points.push_back(f.sampled.batch.rays[i].at(f.sampled.t_values[i * 64 + j]));
  }
  for (auto _ : bs) benchmark::DoNotOptimize(embed_many(f.state.model, f.state.tape, f.ctx, points));
  bs.SetItemsProcessed(bs.iterations() * points.size());
}
BENCHMARK(BM_embed_kernel)->Unit(benchmark::kMillisecond);

void BM_embed_reference(benchmark::State& bs) {
  Fixture& f = fixture(16);
  std::vector<Vec3> points;
  for (std::size_t i = 0; i < f.sampled.batch.size(); ++i) {
    for (int j = 0; j < 64; ++j) points.push_back(f.sampled.batch.rays[i].at(f.sampled.t_values[i * 64 + j]));
  }
  for (auto _ : bs) {
    for (const Vec3& p : points) benchmark::DoNotOptimize(reference::embed_point(f.state.model, f.state.tape, f.features, p));
  }
  bs.SetItemsProcessed(bs.iterations() * points.size());
}
BENCHMARK(BM_embed_reference)->Unit(benchmark::kMillisecond);

void BM_batch_forward_kernel(benchmark::State& bs) {
  Fixture& f = fixture(16);
  for (auto _ : bs) {
    benchmark::DoNotOptimize(evaluate_batch(f.state.model, f.state.tape, f.ctx, f.sampled.batch, f.sampled.t_values,
                                            64, f.weights, {}, {}));
  }
  bs.SetItemsProcessed(bs.iterations() * f.sampled.batch.size());
}
BENCHMARK(BM_batch_forward_kernel)->Unit(benchmark::kMillisecond);

void BM_batch_forward_reference(benchmark::State& bs) {
  Fixture& f = fixture(16);
  for (auto _ : bs) {
    benchmark::DoNotOptimize(reference::evaluate_batch(f.state.model, f.state.tape, f.features, f.sampled.batch,
                                                       f.sampled.t_values, 64, f.weights));
  }
  bs.SetItemsProcessed(bs.iterations() * f.sampled.batch.size());
}
BENCHMARK(BM_batch_forward_reference)->Unit(benchmark::kMillisecond);

void BM_train_step(benchmark::State& bs) {
  Fixture& f = fixture(16);
  const int rays = static_cast<int>(bs.range(0));
  for (auto _ : bs) {
    const SampledBatch sampled = sample_batch(f.data, rays, 64, f.state.rng);
    f.state.tape.zero_grads();
    benchmark::DoNotOptimize(forward_backward(f.state.model, f.state.tape, f.data, sampled, f.weights));
  }
  bs.SetItemsProcessed(bs.iterations() * rays);
}
BENCHMARK(BM_train_step)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
