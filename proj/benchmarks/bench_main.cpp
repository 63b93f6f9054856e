#include <benchmark/benchmark.h>

#include <random>

#include "sdm/eval.hpp"
#include "sdm/multiscale.hpp"

namespace {

sdm::SceneConfig make_scene(std::uint64_t seed) {
  sdm::GenParams p;
  p.seed = seed;
  return sdm::generate_config(p);
}

sdm::FragmentBuffer scene_buffer(const sdm::SceneConfig& cfg) {
  std::vector<sdm::Fragment> frags;
  frags.reserve(cfg.points.size());
  for (const sdm::Point3& p : cfg.points) frags.push_back({p, p.z});
  return sdm::render_buffer(frags, cfg.intrinsics);
}

void BM_render(benchmark::State& state) {
  const sdm::SceneConfig cfg = make_scene(11);
  std::vector<sdm::Fragment> frags;
  for (const sdm::Point3& p : cfg.points) frags.push_back({p, p.z});
  for (auto _ : state) benchmark::DoNotOptimize(sdm::render_buffer(frags, cfg.intrinsics));
}
BENCHMARK(BM_render);

void BM_forward_hard(benchmark::State& state) {
  const sdm::SceneConfig cfg = make_scene(12);
  const sdm::FragmentBuffer buf =
      sdm::add_theta(scene_buffer(cfg), {cfg.theta_star.x, cfg.theta_star.y});
  for (auto _ : state) {
    sdm::AdjustmentField adj = sdm::build_adjustments(buf, cfg.intrinsics, 3, 3);
    benchmark::DoNotOptimize(sdm::forward_hard(buf, cfg.intrinsics, adj));
  }
}
BENCHMARK(BM_forward_hard);

void BM_pipeline_s4(benchmark::State& state) {
  const sdm::SceneConfig cfg = make_scene(13);
  const sdm::FragmentBuffer buf = scene_buffer(cfg);
  sdm::PyramidOptions opts;
  opts.s = 4;
  opts.zoom = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(sdm::sdm_pipeline(buf, cfg.target, cfg.intrinsics, opts));
}
BENCHMARK(BM_pipeline_s4);

}  // namespace

BENCHMARK_MAIN();
