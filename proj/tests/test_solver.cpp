#include <doctest.h>

#include "onepflow/bench.hpp"
#include "onepflow/solver.hpp"

using namespace onepflow;

namespace {

// 1D scalar problem on (0,1): zero boundary, hat initial, optional forcing
Scenario hat_1d(double p, double eps, int resolution, double tau, double t_end,
                double a1 = 1.0) {
  Scenario sc;
  sc.params.p = p;
  sc.params.eps = eps;
  sc.params.delta = 0.25;
  sc.params.n = 1;
  sc.params.N = 1;
  sc.params.resolution = resolution;
  sc.params.tau = tau;
  sc.params.t_end = t_end;
  sc.model = CoefficientModel::defaults(p);
  if (a1 != 1.0) sc.model.a1 = [a1](const Coord&, double) { return a1; };
  sc.box.lo = {0, 0};
  sc.box.hi = {1, 0};
  sc.forcing = ForcingTerm::zero(1);
  sc.boundary = [](const Coord&, double, double* out) { out[0] = 0.0; };
  sc.initial = [](const Coord& x, double* out) {
    out[0] = 1.0 - std::abs(2.0 * x[0] - 1.0);
  };
  sc.descriptor = "test-hat-1d";
  return sc;
}

}  // namespace

TEST_CASE("constants are fixed points of the step") {
  Scenario sc = scenario_constant(2.5, 1.5, 8, 1e-2, 0.05);
  SolverConfig cfg;
  ImplicitSolver solver(sc, cfg);
  VectorField u0 = sc.initial_field(solver.mesh());
  VectorField u1 = solver.implicit_step(u0, sc.params.tau);
  for (int i = 0; i < solver.mesh()->node_count(); ++i)
    CHECK(u1.at(i, 0) == 2.5);
}

TEST_CASE("one-step hand solve on three nodes") {
  // p = 2 without the singular part: (M/tau + K) u = M/tau u_old gives
  // (0.5/0.25 + 4) u = 2, so the interior value is 1/3
  Scenario sc = hat_1d(2.0, 0.5, 2, 0.25, 0.25, /*a1=*/0.0);
  SolverConfig cfg;
  ImplicitSolver solver(sc, cfg);
  VectorField u0 = sc.initial_field(solver.mesh());
  CHECK(u0.at(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
  StepRecord rec;
  VectorField u1 = solver.implicit_step(u0, 0.25, &rec);
  CHECK(u1.at(1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(u1.at(0, 0) == 0.0);
  CHECK(u1.at(2, 0) == 0.0);
  // the frozen problem is already linear, one inner pass suffices
  CHECK(rec.inner_iters == 1);
}

TEST_CASE("zero-length horizon returns only the initial state") {
  Scenario sc = scenario_constant(1.0, 2.0, 4, 1e-2, 0.05);
  sc.params.t_end = 0.0;
  Trajectory traj = run(sc, SolverConfig{});
  CHECK(traj.states.size() == 1);
  CHECK(traj.records.size() == 1);
}

TEST_CASE("constant scenario: checkpoints stay identical across steps") {
  Scenario sc = scenario_constant(-1.5, 2.0, 6, 1e-2, 0.05);
  sc.params.tau = 0.1;
  sc.params.t_end = 1.0;
  Trajectory traj = run(sc, SolverConfig{});
  REQUIRE(traj.states.size() == 11);
  for (const auto& st : traj.states)
    for (double v : st.values) CHECK(v == -1.5);
}

TEST_CASE("trailing partial step lands exactly on the horizon") {
  Scenario sc = scenario_constant(0.0, 2.0, 4, 1e-2, 0.05);
  sc.params.tau = 0.1;
  sc.params.t_end = 0.25;
  Trajectory traj = run(sc, SolverConfig{});
  CHECK(traj.states.back().time == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(traj.records.size() == 4);  // initial + 0.1 + 0.2 + 0.25
}

TEST_CASE("steady state: constants and the linear heat profile") {
  Scenario sc = scenario_constant(3.0, 2.0, 6, 1e-2, 0.05);
  SolverConfig cfg;
  VectorField st = steady_state(sc, cfg);
  for (double v : st.values) CHECK(v == 3.0);

  // linear diffusion with unit source on (0,1): nodal values of x(1-x)/2
  Scenario heat = hat_1d(2.0, 0.5, 16, 0.1, 1.0, /*a1=*/0.0);
  heat.initial = [](const Coord&, double* out) { out[0] = 0.0; };
  heat.forcing = ForcingTerm::constant({1.0});
  SolverConfig hcfg;
  hcfg.steady_tol = 1e-12;
  hcfg.linear_tol = 1e-13;
  VectorField hs = steady_state(heat, hcfg);
  const Mesh& mesh = *hs.mesh;
  for (int i = 0; i < mesh.node_count(); ++i) {
    const double x = mesh.node(i)[0];
    CHECK(hs.at(i, 0) == doctest::Approx(0.5 * x * (1 - x)).epsilon(1e-8));
  }
}

TEST_CASE("steady march reports stagnation when capped") {
  Scenario heat = hat_1d(2.0, 0.5, 16, 0.01, 1.0, 0.0);
  heat.forcing = ForcingTerm::constant({1.0});
  heat.initial = [](const Coord&, double* out) { out[0] = 0.0; };
  SolverConfig cfg;
  cfg.max_steps = 2;
  cfg.steady_tol = 1e-14;
  CHECK_THROWS_AS(steady_state(heat, cfg), StagnationFailure);
}

TEST_CASE("range containment and decay for a scalar source-free march") {
  // the hat initial with zero boundary: values stay inside [0,1] and the
  // peak decays monotonically under the lumped scheme
  for (double p : {1.5, 2.0}) {
    Scenario sc = hat_1d(p, 0.05, 16, 0.02, 0.4);
    Trajectory traj = run(sc, SolverConfig{});
    double prev_sup = kInf;
    for (const auto& st : traj.states) {
      double sup = -kInf;
      for (double v : st.values) {
        CHECK(v >= -1e-8);
        CHECK(v <= 1.0 + 1e-8);
        sup = std::max(sup, v);
      }
      CHECK(sup <= prev_sup + 1e-10);
      prev_sup = sup;
    }
  }
}

TEST_CASE("energy dissipates and the inner loop descends") {
  for (double p : {1.5, 3.0}) {
    Scenario sc = hat_1d(p, 0.05, 16, 0.02, 0.3);
    Trajectory traj = run(sc, SolverConfig{});
    for (size_t k = 2; k < traj.records.size(); ++k) {
      const double before = traj.records[k - 1].energy;
      const double after = traj.records[k].energy;
      CHECK(after <= before + 1e-10 * (1 + std::abs(before)));
    }
    for (size_t k = 1; k < traj.records.size(); ++k)
      CHECK(traj.records[k].descent_margin <=
            1e-10 * (1 + std::abs(traj.records[k].energy)));
  }
}

TEST_CASE("identical inputs give bit-identical trajectories") {
  Scenario sc = scenario_bingham_pipe([](double) { return 0.8; }, "c", 12, 1e-2,
                                      0.05);
  sc.params.t_end = 0.3;
  Trajectory a = run(sc, SolverConfig{});
  Trajectory b = run(sc, SolverConfig{});
  REQUIRE(a.states.size() == b.states.size());
  for (size_t s = 0; s < a.states.size(); ++s) {
    REQUIRE(a.states[s].values.size() == b.states[s].values.size());
    for (size_t i = 0; i < a.states[s].values.size(); ++i)
      CHECK(a.states[s].values[i] == b.states[s].values[i]);
  }
}

TEST_CASE("inner iteration failure surfaces as a convergence error") {
  Scenario sc = hat_1d(1.5, 1e-4, 16, 0.1, 0.1);
  SolverConfig cfg;
  cfg.max_inner = 1;
  cfg.inner_tol = 1e-14;
  CHECK_THROWS_AS(run(sc, cfg), ConvergenceFailure);
}

TEST_CASE("newton acceleration agrees with the plain inner loop") {
  Scenario sc = scenario_radial_steady(2.0, 2, 16, 1e-2, 0.05);
  sc.params.tau = 0.2;
  sc.params.t_end = 0.6;
  SolverConfig plain;
  plain.inner_tol = 1e-7;  // the lagged fixed point contracts slowly here
  SolverConfig accel;
  accel.inner_tol = 1e-10;
  accel.mode = SolverMode::kNewtonAfterKacanov;
  Trajectory a = run(sc, plain);
  Trajectory b = run(sc, accel);
  double worst = 0;
  for (size_t i = 0; i < a.final_state().values.size(); ++i)
    worst = std::max(worst, std::abs(a.final_state().values[i] -
                                     b.final_state().values[i]));
  CHECK(worst <= 1e-4);
  for (size_t k = 1; k < b.records.size(); ++k)
    CHECK(b.records[k].residual <= 1e-10);
}

TEST_CASE("newton acceleration handles several coupled components") {
  Scenario sc;
  sc.params.p = 2.0;
  sc.params.eps = 1e-3;
  sc.params.delta = 0.05;
  sc.params.n = 2;
  sc.params.N = 2;
  sc.params.resolution = 10;
  sc.params.tau = 0.05;
  sc.params.t_end = 0.1;
  sc.model = CoefficientModel::defaults(2.0);
  sc.box.lo = {0, 0};
  sc.box.hi = {1, 1};
  sc.forcing = ForcingTerm::zero(2);
  sc.boundary = [](const Coord&, double, double* out) { out[0] = out[1] = 0.0; };
  sc.initial = [](const Coord& x, double* out) {
    const double bump =
        std::sin(3.14159265358979 * x[0]) * std::sin(3.14159265358979 * x[1]);
    out[0] = bump;
    out[1] = -0.5 * bump;
  };
  sc.descriptor = "test-vector-bump";

  SolverConfig loose;
  loose.inner_tol = 1e-6;
  SolverConfig accel;
  accel.mode = SolverMode::kNewtonAfterKacanov;
  accel.inner_tol = 1e-10;
  Trajectory a = run(sc, loose);
  Trajectory b = run(sc, accel);
  double worst = 0;
  for (size_t i = 0; i < a.final_state().values.size(); ++i)
    worst = std::max(worst, std::abs(a.final_state().values[i] -
                                     b.final_state().values[i]));
  CHECK(worst <= 1e-4);
  // the accelerated march satisfies the tighter residual target per step
  for (size_t k = 1; k < b.records.size(); ++k)
    CHECK(b.records[k].residual <= 1e-10);
}

TEST_CASE("time-dependent coefficients evaluate at the end-of-step time") {
  // a rotating coefficient matrix: the march stays deterministic and finite
  Scenario sc = scenario_bingham_pipe([](double) { return 0.4; }, "c", 10, 5e-2,
                                      0.05);
  sc.params.t_end = 0.3;
  sc.model.gamma = CoefficientModel::rotating_gamma(1.2);
  sc.model.gamma0 = 0.5;
  sc.model.Gamma0 = 6.0;
  sc.descriptor += "-rotating";
  Trajectory a = run(sc, SolverConfig{});
  Trajectory b = run(sc, SolverConfig{});
  for (const auto& st : a.states) st.check();
  REQUIRE(a.states.size() == b.states.size());
  for (size_t s = 0; s < a.states.size(); ++s)
    for (size_t i = 0; i < a.states[s].values.size(); ++i)
      CHECK(a.states[s].values[i] == b.states[s].values[i]);

  // a frozen-in-time copy of the same coefficients differs from the rotating
  // run, which pins the time actually passed to the coefficient fields
  Scenario frozen = sc;
  frozen.model.gamma = [](const Coord& x, double) {
    return CoefficientModel::rotating_gamma(1.2)(x, 0.0);
  };
  frozen.descriptor += "-frozen";
  Trajectory c = run(frozen, SolverConfig{});
  double diff = 0;
  for (size_t i = 0; i < c.final_state().values.size(); ++i)
    diff = std::max(diff, std::abs(c.final_state().values[i] -
                                   a.final_state().values[i]));
  CHECK(diff > 1e-8);
}

TEST_CASE("initial data must match the boundary rule") {
  Scenario sc = scenario_constant(1.0, 2.0, 4, 1e-2, 0.05);
  sc.initial = [](const Coord&, double* out) { out[0] = 2.0; };  // boundary says 1
  ImplicitSolver solver(sc, SolverConfig{});
  CHECK_THROWS_AS(sc.initial_field(solver.mesh()), DomainError);
}

TEST_CASE("a state from a different mesh is rejected") {
  Scenario sc = scenario_constant(1.0, 2.0, 8, 1e-2, 0.05);
  ImplicitSolver solver(sc, SolverConfig{});
  auto other = std::make_shared<Mesh>(build_mesh(sc.box, 4));
  VectorField wrong(other, 1, 0.0);
  CHECK_THROWS_AS(solver.implicit_step(wrong, 0.1), MismatchedDiscretization);
}

TEST_CASE("solver configuration validation") {
  SolverConfig cfg;
  cfg.damping = 0.0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg.damping = 1.0;
  cfg.inner_tol = -1;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
}

TEST_CASE("preconditioned CG solves and flags bad systems") {
  // small SPD system: 1D operator plus identity shift
  Mesh m = build_mesh_1d(0.0, 1.0, 8);
  CoefficientModel model = CoefficientModel::defaults(2.0);
  std::vector<double> mu(m.element_count(), 1.0);
  CsrMatrix K = assemble_frozen_operator(m, model, mu, 0.0);
  for (int i = 0; i < K.n; ++i)
    for (int k = K.row_ptr[i]; k < K.row_ptr[i + 1]; ++k)
      if (K.col_idx[k] == i) K.vals[k] += 1.0;
  std::vector<double> b(K.n, 1.0), x(K.n, 0.0), r(K.n);
  CgResult res = pcg_solve(K, b, x, 1e-12, 1000);
  K.multiply(x.data(), r.data());
  double rn = 0;
  for (int i = 0; i < K.n; ++i) rn += (r[i] - b[i]) * (r[i] - b[i]);
  CHECK(std::sqrt(rn) <= 1e-10);
  CHECK(res.iterations > 0);

  // indefinite matrix trips the curvature check
  CsrMatrix bad = K;
  for (int i = 0; i < bad.n; ++i)
    for (int k = bad.row_ptr[i]; k < bad.row_ptr[i + 1]; ++k)
      if (bad.col_idx[k] == i) bad.vals[k] = -5.0;
  std::vector<double> xb(bad.n, 0.0);
  CHECK_THROWS_AS(pcg_solve(bad, b, xb, 1e-10, 100), NonSPD);
}
