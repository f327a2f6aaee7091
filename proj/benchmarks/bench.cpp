#include <benchmark/benchmark.h>

#include "dass/ptl.hpp"

using namespace dass;

namespace {

UNetConfig desk_unet() { return UNetConfig{}; }

ImageTensor random_image(int batch, int size, uint64_t seed) {
  RngStream rng(seed);
  ImageTensor x(batch, 3, size, size);
  rng.fill_normal(x);
  x.clip(-1, 1);
  return x;
}

LabelMap random_label(int size, int num_classes, uint64_t seed) {
  RngStream rng(seed);
  LabelMap y(size, size);
  for (auto& v : y.v) v = static_cast<uint8_t>(rng.uniform_int(0, num_classes - 1));
  return y;
}

}  // namespace

static void BM_UNetForward(benchmark::State& state) {
  ModelHandle dm = ModelHandle::make_noise_estimator(desk_unet(), 1);
  ImageTensor x = random_image(static_cast<int>(state.range(0)), 32, 2);
  std::vector<int> t(x.n, 100);
  for (auto _ : state) benchmark::DoNotOptimize(dm.apply(x, t));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_UNetForward)->Arg(1)->Arg(4);

static void BM_DdpmTrainStep(benchmark::State& state) {
  auto s = make_linear_schedule(200, 1e-4, 0.02);
  ModelHandle dm = ModelHandle::make_noise_estimator(desk_unet(), 1);
  auto params = dm.params();
  nn::Adam<float> opt;
  RngStream rng(3);
  ImageTensor x0 = random_image(4, 32, 4);
  for (auto _ : state) {
    ImageTensor eps = rng.normal_like(x0);
    ImageTensor grad;
    ddpm_loss(dm, x0, {10, 60, 120, 180}, eps, s, &grad);
    opt.step(params);
    nn::zero_grads(params);
  }
}
BENCHMARK(BM_DdpmTrainStep);

static void BM_SegForward(benchmark::State& state) {
  SegNetConfig cfg;
  ModelHandle g = ModelHandle::make_segmenter(cfg, 5);
  ImageTensor x = random_image(static_cast<int>(state.range(0)), 32, 6);
  for (auto _ : state) benchmark::DoNotOptimize(g.apply(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SegForward)->Arg(1)->Arg(4);

static void BM_TranslateUnguided(benchmark::State& state) {
  auto s = make_linear_schedule(200, 1e-4, 0.02);
  ModelHandle dm = ModelHandle::make_noise_estimator(desk_unet(), 7);
  ImageTensor x0 = random_image(1, 32, 8);
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    TranslationRequest req;
    req.n = n;
    req.x0 = &x0;
    req.model = &dm;
    req.schedule = &s;
    req.rng = RngStream(9);
    benchmark::DoNotOptimize(translate_unguided(req));
  }
}
BENCHMARK(BM_TranslateUnguided)->Arg(1)->Arg(4)->Arg(16);

static void BM_GuidedTranslate(benchmark::State& state) {
  auto s = make_linear_schedule(200, 1e-4, 0.02);
  ModelHandle dm = ModelHandle::make_noise_estimator(desk_unet(), 10);
  SegNetConfig scfg;
  ModelHandle g = ModelHandle::make_segmenter(scfg, 11);
  ImageTensor x0 = random_image(1, 32, 12);
  LabelMap y = random_label(32, scfg.num_classes, 13);
  GuidanceConfig gcfg;
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(guided_translate(x0, n, dm, g, y, gcfg, s, RngStream(14)));
}
BENCHMARK(BM_GuidedTranslate)->Arg(4)->Arg(16);

static void BM_SceneGeneration(benchmark::State& state) {
  SceneSpec spec;
  spec.seed = 15;
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_scene(spec));
    ++spec.seed;
  }
}
BENCHMARK(BM_SceneGeneration);

BENCHMARK_MAIN();
