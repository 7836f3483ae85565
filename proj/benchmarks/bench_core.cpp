#include <benchmark/benchmark.h>

#include <random>

#include "tnd/df_tnd.hpp"
#include "tnd/dl_tnd.hpp"
#include "tnd/metrics.hpp"
#include "tnd/nn.hpp"
#include "tnd/prox.hpp"

using namespace tnd;

namespace {

const Shape kImage{3, 16, 16};

Tensor random_tensor(const Shape& shape, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

Network desk_model(std::size_t hidden) { return Network::initialized(kImage, desk_cnn_layers(kImage, 5, 8, 16, hidden), 1); }

void BM_Forward(benchmark::State& state) {
  const Network net = desk_model(static_cast<std::size_t>(state.range(0)));
  const Tensor x = random_tensor(kImage, 0, 255, 2);
  for (auto _ : state) benchmark::DoNotOptimize(forward(net, x));
}
BENCHMARK(BM_Forward)->Arg(64)->Arg(256);

void BM_InputGradient(benchmark::State& state) {
  const Network net = desk_model(static_cast<std::size_t>(state.range(0)));
  const Tensor x = random_tensor(kImage, 0, 255, 3);
  const ScalarHead head = heads::cw_targeted(1, 10.0);
  for (auto _ : state) benchmark::DoNotOptimize(input_gradient(net, x, head));
}
BENCHMARK(BM_InputGradient)->Arg(64)->Arg(256);

void BM_ProxL1Box(benchmark::State& state) {
  const Tensor a = random_tensor(kImage, -1, 2, 4);
  for (auto _ : state) benchmark::DoNotOptimize(prox_l1_box(a, 0.01));
}
BENCHMARK(BM_ProxL1Box);

void BM_ProjectSimplex(benchmark::State& state) {
  const Tensor c = random_tensor({static_cast<std::size_t>(state.range(0))}, -1, 1, 5);
  for (auto _ : state) benchmark::DoNotOptimize(project_simplex(c.values()));
}
BENCHMARK(BM_ProjectSimplex)->Arg(64)->Arg(256)->Arg(4096);

void BM_InversionSolve(benchmark::State& state) {
  const Network net = desk_model(256);
  const Tensor x = random_tensor(kImage, 0, 255, 6);
  SolverConfig cfg = DFConfig::default_solver();
  cfg.iterations = static_cast<std::size_t>(state.range(0));
  cfg.change_patience = 0;
  cfg.record_trace = false;
  const double lambda = DFConfig{}.lambda(kImage);
  for (auto _ : state) benchmark::DoNotOptimize(invert_input(net, x, lambda, cfg));
}
BENCHMARK(BM_InversionSolve)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_RocCurve(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor s = random_tensor({n}, 0, 1, 7);
  auto flags = std::make_unique<bool[]>(n);
  for (std::size_t i = 0; i < n; ++i) flags[i] = i % 2 == 0;
  const std::span<const bool> truth(flags.get(), n);
  for (auto _ : state) benchmark::DoNotOptimize(roc_curve(s.values(), truth));
}
BENCHMARK(BM_RocCurve)->Arg(20)->Arg(1000);

}  // namespace
BENCHMARK_MAIN();
