#include <benchmark/benchmark.h>

#include <random>

#include "deid/eval.hpp"
#include "deid/geom.hpp"
#include "deid/gennet.hpp"
#include "deid/nn.hpp"
#include "deid/pipeline.hpp"
#include "deid/synthface.hpp"

using namespace deid;

namespace {

img::Image noise_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  img::Image out(w, h, 3);
  for (double& v : out.data()) v = u(rng);
  return out;
}

void BM_Conv2dForward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  nn::Conv2d conv(8, 16, rng);
  nn::Tensor x({4, 8, size, size}, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x));
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(32);

void BM_GeneratorInference(benchmark::State& state) {
  const gen::Generator g(gen::GeneratorSpec{}, 3);
  const auto y = gen::IdentityVector::one_hot(g.spec().identities, 0);
  const gen::AppearanceVector z(g.spec().expressions, 0);
  for (auto _ : state) benchmark::DoNotOptimize(gen::generate(g, y, z));
}
BENCHMARK(BM_GeneratorInference);

void BM_WarpImage(benchmark::State& state) {
  const img::Image src = noise_image(64, 64, 2);
  const geom::Homography h(linalg::Mat3{1.1, 0.05, 12, -0.03, 1.05, 9, 1e-4, -2e-4, 1});
  for (auto _ : state) benchmark::DoNotOptimize(geom::warp_image(src, h, 96, 96, 0.0));
}
BENCHMARK(BM_WarpImage);

void BM_RobustHomography(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 64);
  std::vector<geom::Point2> src, dst;
  for (int i = 0; i < static_cast<int>(state.range(0)); ++i) {
    src.push_back({u(rng), u(rng)});
    dst.push_back({src.back().x * 1.1 + 3, src.back().y * 0.95 - 2});
  }
  for (auto _ : state) benchmark::DoNotOptimize(geom::robust_homography(src, dst));
}
BENCHMARK(BM_RobustHomography)->Arg(5)->Arg(10)->Arg(20);

void BM_SkinSegmentAndClean(benchmark::State& state) {
  const img::Image face = noise_image(64, 64, 5);
  const pipeline::PipelineConfig cfg;
  for (auto _ : state)
    benchmark::DoNotOptimize(pipeline::clean_mask(pipeline::skin_segment(face, cfg.skin), cfg.morph_radius));
}
BENCHMARK(BM_SkinSegmentAndClean);

void BM_Metrics(benchmark::State& state) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0, 1);
  eval::ScoreSet s;
  for (int i = 0; i < state.range(0); ++i) {
    s.legit.push_back(n(rng) + 1.5);
    s.impostor.push_back(n(rng));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::compute_eer(s));
    benchmark::DoNotOptimize(eval::compute_auc(s));
    benchmark::DoNotOptimize(eval::compute_ver_at_far(s));
  }
}
BENCHMARK(BM_Metrics)->Arg(300)->Arg(3000);

void BM_RenderFace(benchmark::State& state) {
  const auto params = synth::identity_params(1, 0);
  for (auto _ : state)
    benchmark::DoNotOptimize(synth::render_face(params, synth::Expression::happy, synth::Pose::frontal, 1.0));
}
BENCHMARK(BM_RenderFace);

}  // namespace

BENCHMARK_MAIN();
