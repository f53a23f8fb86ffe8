#include <benchmark/benchmark.h>

#include <random>

#include "isoface/image_ops.hpp"
#include "isoface/loglayer.hpp"
#include "isoface/model.hpp"

namespace {

using namespace isoface;

TensorF random_image(std::size_t c, std::size_t h, std::size_t w,
                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(0.f, 1.f);
  TensorF x({c, h, w});
  for (auto& v : x.data()) v = dist(rng);
  return x;
}

void BM_GaussianBlur(benchmark::State& state) {
  auto k = gaussian_kernel2d(5, 1.0);
  auto x = random_image(8, 32, 32, 1);
  for (auto _ : state) benchmark::DoNotOptimize(depthwise_gaussian_blur(x, k));
}
BENCHMARK(BM_GaussianBlur);

void BM_Bandpass(benchmark::State& state) {
  LoGSpec spec;
  spec.in_planes = 8;
  spec.out_planes = 8;
  auto k = gaussian_kernel2d(spec.kernel_size, spec.sigma);
  auto x = random_image(8, 32, 32, 2);
  for (auto _ : state) benchmark::DoNotOptimize(bandpass(x, spec, k));
}
BENCHMARK(BM_Bandpass);

void BM_ForwardSequence(benchmark::State& state) {
  ModelConfig cfg;
  Model<float> model(cfg, 7);
  std::vector<TensorF> frames;
  for (int t = 0; t < 10; ++t) frames.push_back(random_image(3, 32, 32, t));
  for (auto _ : state)
    benchmark::DoNotOptimize(model.forward_sequence(frames, false));
}
BENCHMARK(BM_ForwardSequence);

void BM_TrainStep(benchmark::State& state) {
  ModelConfig cfg;
  Model<float> model(cfg, 7);
  std::vector<TensorF> frames;
  for (int t = 0; t < 10; ++t) frames.push_back(random_image(3, 32, 32, t));
  for (auto _ : state) {
    TensorF emb = model.forward_sequence(frames, true);
    TensorF d(emb.shape());
    d.fill(1.f);
    model.backward_sequence(d);
  }
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
