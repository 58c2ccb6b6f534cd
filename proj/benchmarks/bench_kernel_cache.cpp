#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "avsr/kernel_cache.hpp"
#include "avsr/model.hpp"

namespace {

avsr::ModelConfig bench_config() {
  avsr::ModelConfig c;
  c.channels = 16;
  c.recurrent_blocks = 2;
  c.refine_blocks = 2;
  c.window = 1;
  c.deform_groups = 4;
  c.flow = avsr::FlowKind::kTranslationOracle;
  c.prior_widths = {16, 32};
  c.seed = 3;
  return c;
}

constexpr std::int64_t kSide = 256;
constexpr double kScale = 4.0;

void BM_BankMiss(benchmark::State& state) {
  avsr::HyperMLP mlp;
  avsr::KernelCache cache;
  avsr::ScaleSpec spec(kScale, kScale, kSide, kSide);
  torch::NoGradGuard no_grad;
  for (auto _ : state) {
    cache.clear();
    benchmark::DoNotOptimize(cache.get_or_compute(*mlp, spec, 3));
  }
}
BENCHMARK(BM_BankMiss)->Unit(benchmark::kMillisecond)->Iterations(3);

void BM_BankHit(benchmark::State& state) {
  avsr::HyperMLP mlp;
  avsr::KernelCache cache;
  avsr::ScaleSpec spec(kScale, kScale, kSide, kSide);
  torch::NoGradGuard no_grad;
  cache.get_or_compute(*mlp, spec, 3);
  for (auto _ : state) benchmark::DoNotOptimize(cache.get_or_compute(*mlp, spec, 3));
}
BENCHMARK(BM_BankHit)->Unit(benchmark::kMicrosecond);

// Per-frame inference time at 256x256 -> x4, bank from the warm cache versus
// re-evaluated for every frame.
void BM_Inference(benchmark::State& state) {
  const bool cached = state.range(0) != 0;
  const std::int64_t frames = 2;
  auto model = avsr::build_variant(bench_config());
  model->eval();
  torch::NoGradGuard no_grad;
  auto video = torch::rand({frames, 3, kSide, kSide}, torch::TensorOptions().dtype(torch::kFloat));
  if (cached) model->precompute(avsr::ScaleSpec(kScale, kScale, kSide, kSide));
  for (auto _ : state) {
    benchmark::DoNotOptimize(model->super_resolve(video, kScale, kScale, cached));
  }
  state.SetItemsProcessed(state.iterations() * frames);
}
BENCHMARK(BM_Inference)
    ->ArgName("cached")
    ->Arg(1)
    ->Arg(0)
    ->Unit(benchmark::kMillisecond)
    ->Iterations(2);

}  // namespace

BENCHMARK_MAIN();
