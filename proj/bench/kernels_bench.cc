#include <benchmark/benchmark.h>

#include "dpiil/learner.h"

namespace {

using namespace dpiil;

struct Fixture {
  World world = BuildWorld(EnvConfig::Default());
  Dataset data;
  EnsemblePolicy policy;
  SpeedEstimator speed;
  std::vector<State2> probes;

  static const Fixture& Get() {
    static const Fixture f = [] {
      Fixture x;
      x.data = GenerateDemos(x.world, ExpertConfig::Default(), 3, 0);
      NetConfig net;
      net.train.epochs = 50;
      x.policy = FitPolicy(x.data, 5, 1, net, x.world.max_action());
      x.speed = FitSpeed(x.data, 2, net);
      Rng rng(3);
      std::uniform_real_distribution<double> u(-10.0, 10.0);
      for (int i = 0; i < 4096; ++i) x.probes.push_back({u(rng), u(rng)});
      return x;
    }();
    return f;
  }
};

void BM_EvaluateParallel(benchmark::State& st) {
  const Fixture& f = Fixture::Get();
  for (auto _ : st) {
    benchmark::DoNotOptimize(EvaluateEpisodes(PolicyController(f.policy), f.world, 50, 7));
  }
}
BENCHMARK(BM_EvaluateParallel)->Unit(benchmark::kMillisecond);

void BM_EvaluateSerial(benchmark::State& st) {
  const Fixture& f = Fixture::Get();
  for (auto _ : st) {
    benchmark::DoNotOptimize(EvaluateEpisodesSerial(PolicyController(f.policy), f.world, 50, 7));
  }
}
BENCHMARK(BM_EvaluateSerial)->Unit(benchmark::kMillisecond);

void BM_RiskBatch(benchmark::State& st) {
  const Fixture& f = Fixture::Get();
  const RiskGate gate(GateMode::kDpiilUcb, 1e-4, f.policy, &f.speed);
  for (auto _ : st) benchmark::DoNotOptimize(gate.RiskBatch(f.probes));
}
BENCHMARK(BM_RiskBatch)->Unit(benchmark::kMillisecond);

void BM_RiskPerState(benchmark::State& st) {
  const Fixture& f = Fixture::Get();
  const RiskGate gate(GateMode::kDpiilUcb, 1e-4, f.policy, &f.speed);
  for (auto _ : st) {
    double acc = 0.0;
    for (const State2& s : f.probes) acc += gate.Risk(s);
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_RiskPerState)->Unit(benchmark::kMillisecond);

void BM_FitPolicyParallel(benchmark::State& st) {
  const Fixture& f = Fixture::Get();
  NetConfig net;
  net.train.epochs = 20;
  for (auto _ : st) benchmark::DoNotOptimize(FitPolicy(f.data, 5, 1, net, f.world.max_action()));
}
BENCHMARK(BM_FitPolicyParallel)->Unit(benchmark::kMillisecond);

void BM_FitPolicySerial(benchmark::State& st) {
  const Fixture& f = Fixture::Get();
  NetConfig net;
  net.train.epochs = 20;
  for (auto _ : st) benchmark::DoNotOptimize(FitPolicySerial(f.data, 5, 1, net, f.world.max_action()));
}
BENCHMARK(BM_FitPolicySerial)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
