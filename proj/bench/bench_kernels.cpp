#include <benchmark/benchmark.h>

#include <vector>

#include "posoc/kernels.hpp"
#include "posoc/lqg.hpp"
#include "posoc/scenario.hpp"

using namespace posoc;

namespace {

const Scenario& table1() {
  static const Scenario s = load_scenario(POSOC_SOURCE_DIR "/scenarios/table1.json");
  return s;
}

const Scenario& noise10() {
  static const Scenario s = load_scenario(POSOC_SOURCE_DIR "/scenarios/noise_10d.json");
  return s;
}

template <Execution E>
void BM_monte_carlo(benchmark::State& state) {
  const Scenario& s = table1();
  const auto obs = s.schedule(5);
  const ControlProblem p = s.problem(obs);
  const LqgSpec& l = *s.lqg;
  const RiccatiSolution ricc = riccati_solve(l.A, l.B, l.Q, l.R, l.Q_T, s.horizon, s.riccati_dt);
  const PolicyPtr policy = separation_policy(l, ricc, obs, s.eval_dt);
  McOptions opt;
  opt.M = static_cast<std::size_t>(state.range(0));
  opt.dt = s.eval_dt;
  opt.seed = 5;
  for (auto _ : state) benchmark::DoNotOptimize(monte_carlo(p, *policy, opt, E).mean);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <Execution E>
void BM_em_sweep(benchmark::State& state) {
  const Scenario& s = noise10();
  const ControlProblem p = s.problem(s.schedule());
  const auto M = static_cast<std::size_t>(state.range(0));
  std::vector<Vector> x(M);
  std::vector<RngStream> rngs;
  rngs.reserve(M);
  for (std::size_t m = 0; m < M; ++m) {
    rngs.emplace_back(9, m);
    x[m] = p.initial_law.sample(rngs[m]);
  }
  const Vector zero = Vector::Zero(static_cast<Eigen::Index>(p.dim_alpha));
  const auto alpha = [&](std::size_t, const Vector&) { return zero; };
  double t = 0.0;
  for (auto _ : state) {
    em_sweep(x, rngs, alpha, t, 0.01, p, E);
    t = t < 0.98 ? t + 0.01 : 0.0;
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <Execution E>
void BM_gram(benchmark::State& state) {
  const auto M = static_cast<Eigen::Index>(state.range(0));
  const Eigen::Index F = 66;  // degree-2 features over (x, z) in 10 + 10 dimensions
  RngStream rng(3, 3);
  Matrix X(M, F);
  Vector y(M);
  for (Eigen::Index i = 0; i < M; ++i) {
    for (Eigen::Index j = 0; j < F; ++j) X(i, j) = rng.normal();
    y[i] = rng.normal();
  }
  Matrix G;
  Vector r;
  for (auto _ : state) {
    gram(X, y, G, r, E);
    benchmark::DoNotOptimize(G.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_monte_carlo<Execution::serial>)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_monte_carlo<Execution::parallel>)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_em_sweep<Execution::serial>)->Arg(10000)->Arg(100000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_em_sweep<Execution::parallel>)->Arg(10000)->Arg(100000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_gram<Execution::serial>)->Arg(10000)->Arg(100000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_gram<Execution::parallel>)->Arg(10000)->Arg(100000)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
