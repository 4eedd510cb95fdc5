#include <benchmark/benchmark.h>

#include <random>

#include "onepflow/bench.hpp"
#include "onepflow/flux.hpp"
#include "onepflow/solver.hpp"

using namespace onepflow;

namespace {

Parameters flux_params(double p, double eps) {
  Parameters pr;
  pr.p = p;
  pr.eps = eps;
  return pr;
}

void BM_FluxEval(benchmark::State& state) {
  CoefficientModel m = CoefficientModel::defaults(1.5);
  Parameters pr = flux_params(1.5, 1e-3);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> gauss;
  Mat zeta(1, 2);
  for (auto& v : zeta.data()) v = gauss(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(flux_A_eps(m, pr, {0.5, 0.5}, 0.0, zeta));
  }
}
BENCHMARK(BM_FluxEval);

void BM_BilinearFormB(benchmark::State& state) {
  CoefficientModel m = CoefficientModel::defaults(3.0);
  Parameters pr = flux_params(3.0, 1e-3);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> gauss;
  Mat zeta(2, 2), xi(2, 2);
  for (auto& v : zeta.data()) v = gauss(rng);
  for (auto& v : xi.data()) v = gauss(rng);
  BilinearEvaluator ev(m, pr, {0.5, 0.5}, 0.0, zeta);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ev.form_B(xi, xi));
  }
}
BENCHMARK(BM_BilinearFormB);

void BM_GradientMapInverse(benchmark::State& state) {
  CoefficientModel m = CoefficientModel::defaults(1.5);
  Parameters pr = flux_params(1.5, 1e-4);
  Mat eta(1, 2);
  eta(0, 0) = 2.7;
  eta(0, 1) = -0.4;
  for (auto _ : state) {
    benchmark::DoNotOptimize(map_G_p_eps_inverse(m, pr, {0, 0}, 0.0, eta));
  }
}
BENCHMARK(BM_GradientMapInverse);

void BM_OperatorFill(benchmark::State& state) {
  const int res = static_cast<int>(state.range(0));
  Mesh mesh = build_mesh({{-2, -2}, {2, 2}}, res);
  CoefficientModel m = CoefficientModel::defaults(2.0);
  FrozenOperatorAssembler asmb(mesh);
  std::vector<double> mu(mesh.element_count(), 1.0);
  for (int e = 0; e < mesh.element_count(); ++e) mu[e] = 1.0 + 1e-3 * (e % 7);
  CsrMatrix K;
  for (auto _ : state) {
    asmb.fill(m, mu, 0.0, K);
    benchmark::DoNotOptimize(K.vals.data());
  }
  state.SetItemsProcessed(state.iterations() * mesh.element_count());
}
BENCHMARK(BM_OperatorFill)->Arg(32)->Arg(64);

void BM_ImplicitStep(benchmark::State& state) {
  const int res = static_cast<int>(state.range(0));
  Scenario sc = scenario_radial_steady(2.0, 2, res, 1e-3, 0.05);
  SolverConfig cfg;
  cfg.mode = SolverMode::kNewtonAfterKacanov;
  ImplicitSolver solver(sc, cfg);
  VectorField u0 = sc.initial_field(solver.mesh());
  for (auto _ : state) {
    benchmark::DoNotOptimize(solver.implicit_step(u0, sc.params.tau));
  }
}
BENCHMARK(BM_ImplicitStep)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
