#include <benchmark/benchmark.h>

#include "cci/carafe.hpp"
#include "cci/cgd.hpp"
#include "cci/irmb.hpp"
#include "cci/network.hpp"

using namespace cci;

namespace {

void BM_Conv3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  Rng rng(0);
  const ConvSpec spec = ConvSpec::same(c, c, 3);
  const Tensor x = Tensor::normal({1, c, 40, 40}, rng);
  const Tensor w = Tensor::normal(spec.weight_shape(), rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, spec, w));
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * static_cast<double>(spec.macs(x.shape())),
                                                 benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(64);

void BM_Depthwise3x3(benchmark::State& state) {
  Rng rng(0);
  const ConvSpec spec = ConvSpec::depthwise(144, 3);
  const Tensor x = Tensor::normal({1, 144, 40, 40}, rng);
  const Tensor w = Tensor::normal(spec.weight_shape(), rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, spec, w));
}
BENCHMARK(BM_Depthwise3x3);

void BM_EwMhsa(benchmark::State& state) {
  Rng rng(0);
  irmb::Config cfg{.channels = 16, .expand_ratio = 9, .heads = 4};
  const irmb::Params p = irmb::Params::init(cfg, rng);
  const Tensor x = Tensor::normal({1, 16, 40, 40}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(irmb::ew_mhsa(x, cfg, p));
}
BENCHMARK(BM_EwMhsa);

void BM_EwMhsaBackward(benchmark::State& state) {
  Rng rng(0);
  irmb::Config cfg{.channels = 16, .expand_ratio = 9, .heads = 4};
  const irmb::Params p = irmb::Params::init(cfg, rng);
  const Tensor x = Tensor::normal({1, 16, 40, 40}, rng);
  irmb::Cache cache;
  const Tensor y = irmb::ew_mhsa(x, cfg, p, &cache);
  const Tensor g = Tensor::normal(y.shape(), rng);
  for (auto _ : state) benchmark::DoNotOptimize(irmb::ew_mhsa_backward(x, cfg, p, cache, g));
}
BENCHMARK(BM_EwMhsaBackward);

void BM_Carafe(benchmark::State& state) {
  Rng rng(0);
  carafe::Config cfg;
  cfg.channels = 64;
  const carafe::Params p = carafe::Params::init(cfg, rng);
  const Tensor x = Tensor::normal({1, 64, 20, 20}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(carafe::forward(x, cfg, p));
}
BENCHMARK(BM_Carafe);

void BM_Cgd(benchmark::State& state) {
  Rng rng(0);
  cgd::Config cfg;
  cfg.in_channels = 32;
  cgd::Params p = cgd::Params::init(cfg, rng);
  const Tensor x = Tensor::normal({1, 32, 40, 40}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(cgd::forward(x, cfg, p, Mode::eval));
}
BENCHMARK(BM_Cgd);

void BM_NetworkForward(benchmark::State& state) {
  net::NetworkConfig cfg;
  cfg.width_multiple = 0.125;
  cfg.input_size = 160;
  net::Graph g = net::build_network(cfg, 0);
  Rng rng(0);
  const Tensor image = Tensor::uniform({1, 3, 160, 160}, 0.0f, 1.0f, rng);
  for (auto _ : state) benchmark::DoNotOptimize(g.forward(image, Mode::eval));
}
BENCHMARK(BM_NetworkForward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
