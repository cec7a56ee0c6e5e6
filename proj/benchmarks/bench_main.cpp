// Hot-path timings: scene synthesis, the posterior pass, the decode
// and compositing stack, Gram assembly, and one full training step.
// Sizes match the small-image regime the model actually runs at.

#include <benchmark/benchmark.h>

#include "occgen/decode.hpp"
#include "occgen/encode.hpp"
#include "occgen/gp.hpp"
#include "occgen/train.hpp"

using namespace occgen;

namespace {

ModelConfig bench_model_cfg() {
  ModelConfig mc;
  mc.image_size = 32;
  return mc;
}

SceneConfig bench_scene_cfg() {
  SceneConfig sc;
  sc.image_size = 32;
  sc.num_views = 8;
  return sc;
}

const Scene& bench_scene() {
  static const Scene sc = generate_scene(bench_scene_cfg(), 17);
  return sc;
}

Model& bench_model() {
  static Model m = Model::create(bench_model_cfg());
  return m;
}

}  // namespace

static void BM_SceneGeneration(benchmark::State& state) {
  const SceneConfig cfg = bench_scene_cfg();
  uint64_t seed = 0;
  for (auto _ : state) {
    Scene sc = generate_scene(cfg, seed++);
    benchmark::DoNotOptimize(sc.images.front().sum());
  }
}
BENCHMARK(BM_SceneGeneration);

static void BM_GramAssembly(benchmark::State& state) {
  Model& m = bench_model();
  const int n = static_cast<int>(state.range(0));
  Rng rng(3);
  Matrix lam(n, m.cfg.lambda_dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m.cfg.lambda_dim; ++j) lam(i, j) = rng.normal();
  for (auto _ : state) {
    ad::Tape tape;
    nn::Ctx c{tape, m.ps};
    ad::Var G = gp::gram(c, m.gp_dims[0], tape.constant(lam));
    benchmark::DoNotOptimize(tape.val(G).sum());
  }
}
BENCHMARK(BM_GramAssembly)->Arg(8)->Arg(32);

static void BM_PosteriorPass(benchmark::State& state) {
  Model& m = bench_model();
  const Scene& sc = bench_scene();
  const int T = static_cast<int>(state.range(0));
  std::vector<Matrix> frames(sc.images.begin(), sc.images.begin() + T);
  std::vector<int> t_obs(sc.timesteps.begin(), sc.timesteps.begin() + T);
  uint64_t seed = 0;
  for (auto _ : state) {
    ad::Tape tape;
    nn::Ctx c{tape, m.ps};
    Rng rng(seed++);
    InferenceResult ir = full_inference(c, m, frames, t_obs, {}, rng, 1.0);
    benchmark::DoNotOptimize(tape.val(ir.z_obj).sum());
  }
}
BENCHMARK(BM_PosteriorPass)->Arg(2)->Arg(6);

static void BM_DecodeComposite(benchmark::State& state) {
  Model& m = bench_model();
  const Scene& sc = bench_scene();
  ad::Tape tape;
  nn::Ctx c{tape, m.ps};
  Rng rng(5);
  InferenceResult ir = full_inference(c, m, {sc.images[0], sc.images[1]},
                                      {sc.timesteps[0], sc.timesteps[1]}, {},
                                      rng, 1.0);
  const Matrix z_view = tape.val(ir.z_view_T).row(0);
  const Matrix z_obj = tape.val(ir.z_obj);
  const Matrix z_bck = tape.val(ir.z_bck);
  const Matrix z_pres = tape.val(ir.z_pres);
  for (auto _ : state) {
    ad::Tape t2;
    nn::Ctx c2{t2, m.ps};
    FrameDecode fd =
        decode_frame(c2, m, t2.constant(z_obj), t2.constant(z_bck),
                     t2.constant(z_view));
    ad::Var pi = compose_weights(c2, fd.shapes, fd.order,
                                 t2.constant(z_pres), m.cfg.compose_rule);
    ad::Var xhat = composite(c2, pi, fd);
    benchmark::DoNotOptimize(t2.val(xhat).sum());
  }
}
BENCHMARK(BM_DecodeComposite);

static void BM_TrainStepStage1(benchmark::State& state) {
  Model& m = bench_model();
  const Scene& sc = bench_scene();
  BatchElement be;
  be.scene = &sc;
  be.scene_index = 0;
  be.obs = {0, 1, 2};
  uint64_t seed = 0;
  for (auto _ : state) {
    ad::Tape tape;
    nn::Ctx c{tape, m.ps};
    Rng rng(seed++);
    StageLoss loss = loss_stage1(c, m, be, 1.0, 2.0, rng);
    tape.backward(loss.total);
    benchmark::DoNotOptimize(loss.parts.total);
  }
}
BENCHMARK(BM_TrainStepStage1);

BENCHMARK_MAIN();
