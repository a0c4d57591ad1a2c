#include <benchmark/benchmark.h>

#include "sealpose/gbi.hpp"
#include "sealpose/metrics.hpp"
#include "sealpose/trainer.hpp"

using namespace sealpose;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(1);
  const Matrix a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  for (auto _ : state) {
    ad::Tape t;
    ad::Var x = t.variable(a), y = t.variable(b);
    ad::Var loss = ad::sum(ad::relu(ad::matmul(x, y)));
    t.backward(loss);
    benchmark::DoNotOptimize(x.grad().data());
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(64)->Arg(256);

struct EnergyFixture {
  SkeletonSpec spec = SkeletonSpec::canonical17();
  LossNetConfig cfg;
  LossNetContext ctx;
  ParamStore params;
  Matrix x, y;

  EnergyFixture(LossNetVariant v, Eigen::Index batch) {
    cfg.variant = v;
    ctx = LossNetContext::build(spec, cfg);
    params = init_lossnet(cfg, ctx);
    Rng rng(2);
    x = random_matrix(batch, 34, rng);
    y = 0.3 * random_matrix(batch, 51, rng);
  }
};

void BM_EnergyForward(benchmark::State& state) {
  EnergyFixture f(static_cast<LossNetVariant>(state.range(0)), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(lossnet_energies(f.params, f.cfg, f.ctx, f.x, f.y).data());
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_EnergyForward)
    ->Args({static_cast<int>(LossNetVariant::kMlp), 64})
    ->Args({static_cast<int>(LossNetVariant::kGraph), 64});

void BM_EnergyGradient(benchmark::State& state) {
  EnergyFixture f(LossNetVariant::kGraph, state.range(0));
  const GbiModel model{&f.params, f.cfg, &f.ctx, CameraModel{}};
  for (auto _ : state) benchmark::DoNotOptimize(energy_gradient(model, f.x, f.y).grad.data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EnergyGradient)->Arg(64);

void BM_TrainStep(benchmark::State& state) {
  GeneratorConfig gen = GeneratorConfig::defaults();
  gen.n_samples = 64;
  const Dataset data = make_dataset(gen, CameraModel{});
  ModelSetup setup;
  setup.spec = gen.spec;
  TrainConfig cfg;
  cfg.baseline_mode = state.range(0) == 0;
  cfg.objective.K = static_cast<int>(state.range(1));
  std::vector<const Sample*> batch;
  for (const Sample& s : data.samples) batch.push_back(&s);
  TrainState st = TrainState::init(setup);
  Rng rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(batch, st, setup, cfg, rng, data.samples).L_F);
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_TrainStep)->Args({0, 0})->Args({1, 0})->Args({1, 4})->Unit(benchmark::kMillisecond);

void BM_PMpjpe(benchmark::State& state) {
  Rng rng(4);
  const GeneratorConfig gen = GeneratorConfig::defaults();
  const Pose3D gt = generate_pose(gen, rng);
  const Pose3D pred = gt + 30.0 * random_matrix(17, 3, rng);
  for (auto _ : state) benchmark::DoNotOptimize(p_mpjpe(pred, gt));
}
BENCHMARK(BM_PMpjpe);

}  // namespace
BENCHMARK_MAIN();
