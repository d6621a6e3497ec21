// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "gpcn/fasd.hpp"
#include "gpcn/mbcr.hpp"
#include "gpcn/metrics.hpp"
#include "gpcn/model.hpp"
#include "gpcn/ops.hpp"
#include "gpcn/optim.hpp"
#include "gpcn/phantom.hpp"
#include "gpcn/ssm.hpp"
#include "gpcn/transforms.hpp"

namespace {

using namespace gpcn;

Tensor uniform(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return init::uniform(std::move(s), lo, hi, rng);
}

ModelConfig toy_model() {
  ModelConfig c;
  c.stages = 3;
  c.channels = 8;
  c.state_dim = 16;
  c.fasd_hidden = 16;
  return c;
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto c = state.range(0), hw = state.range(1);
  const Tensor x = uniform({2, c, hw, hw}, 1), w = uniform({c, c, 3, 3}, 2), b = uniform({c}, 3);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, 1));
  state.SetItemsProcessed(state.iterations() * 2 * c * c * 9 * hw * hw);
}
BENCHMARK(BM_Conv2dForward)->Args({8, 64})->Args({16, 64})->Args({16, 32});

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = state.range(0), hw = state.range(1);
  Tensor x = uniform({2, c, hw, hw}, 1), w = uniform({c, c, 3, 3}, 2), b = uniform({c}, 3);
  for (Tensor* t : {&x, &w, &b}) t->set_requires_grad(true);
  for (auto _ : state) {
    for (Tensor* t : {&x, &w, &b}) t->zero_grad();
    ops::sum(ops::conv2d(x, w, b, 1)).backward();
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({8, 64})->Args({16, 32});

void BM_Ss2d(benchmark::State& state) {
  const auto c = state.range(0), hw = state.range(1);
  Rng rng(4);
  const SsmParams p = SsmParams::init(c, 16, rng);
  const Tensor x = uniform({8, c, hw, hw}, 5);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ss2d(x, p));
  state.SetItemsProcessed(state.iterations() * 8 * hw * hw);
}
BENCHMARK(BM_Ss2d)->Args({16, 16})->Args({16, 32});

void BM_Fft2(benchmark::State& state) {
  const auto hw = state.range(0);
  const Tensor x = uniform({2, 1, hw, hw}, 6);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(fft2(x));
}
BENCHMARK(BM_Fft2)->Arg(64)->Arg(128)->Arg(256);

void BM_Dwt2Roundtrip(benchmark::State& state) {
  const Tensor x = uniform({2, 8, 64, 64}, 7);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(idwt2(dwt2(x)));
}
BENCHMARK(BM_Dwt2Roundtrip);

void BM_MbcrForward(benchmark::State& state) {
  Rng rng(8);
  const MbcrBlockParams p = MbcrBlockParams::init(8, 16, 2.0, rng);
  const Tensor x = uniform({2, 8, 64, 64}, 9);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(mbcr_forward(x, p));
}
BENCHMARK(BM_MbcrForward)->Unit(benchmark::kMillisecond);

void BM_FasdForward(benchmark::State& state) {
  Rng rng(10);
  const FasdBlockParams p = FasdBlockParams::init(16, rng, false);
  const Tensor x = uniform({2, 1, 64, 64}, 11, 0.0, 1.0);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(fasd_forward(x, p));
}
BENCHMARK(BM_FasdForward)->Unit(benchmark::kMillisecond);

void BM_GpcnForward(benchmark::State& state) {
  const GpcnParams p = GpcnParams::init(toy_model());
  const Tensor x = uniform({1, 1, 64, 64}, 12, 0.0, 1.0);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(gpcn_forward(x, p));
}
BENCHMARK(BM_GpcnForward)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  GpcnParams p = GpcnParams::init(toy_model());
  AdamState adam = AdamState::for_params(p.parameters());
  const Tensor x = uniform({2, 1, 64, 64}, 13, 0.0, 1.0), y = uniform({2, 1, 64, 64}, 14, 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(x, y, p, adam));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
  const Tensor a = uniform({64, 64}, 15, 0.0, 1.0), b = uniform({64, 64}, 16, 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::ssim(a.data(), b.data(), 64, 64));
}
BENCHMARK(BM_Ssim);

void BM_GeneratePhantom(benchmark::State& state) {
  const DomainFamily& f = find_family("siemens_fdg");
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_phantom(seed++, f, 64, 64));
}
BENCHMARK(BM_GeneratePhantom)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
