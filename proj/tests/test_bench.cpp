#include <doctest.h>

#include "onepflow/bench.hpp"
#include "onepflow/diagnostics.hpp"

using namespace onepflow;

namespace {

// divergence of the combined flux of the reference profile, by central
// differences of the closed-form gradient
double stationary_divergence(double p, const Coord& x, double h) {
  auto flux = [p](const Coord& y) {
    RadialSample s = exact_radial(p, 2, y);
    Coord A = {0, 0};
    double m = std::hypot(s.gradient[0], s.gradient[1]);
    if (m > 0) {
      const double w = 1.0 / m + std::pow(m, p - 2.0);
      A[0] = w * s.gradient[0];
      A[1] = w * s.gradient[1];
    }
    return A;
  };
  const Coord xp = {x[0] + h, x[1]}, xm = {x[0] - h, x[1]};
  const Coord yp = {x[0], x[1] + h}, ym = {x[0], x[1] - h};
  return (flux(xp)[0] - flux(xm)[0]) / (2 * h) +
         (flux(yp)[1] - flux(ym)[1]) / (2 * h);
}

}  // namespace

TEST_CASE("reference profile: values, gradient, flat region") {
  RadialSample s = exact_radial(2.0, 2, {2.0, 0.0});
  CHECK(s.value == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::hypot(s.gradient[0], s.gradient[1]) ==
        doctest::Approx(1.0).epsilon(1e-15));

  RadialSample flat = exact_radial(2.0, 2, {0.3, -0.4});
  CHECK(flat.value == 0.0);
  CHECK(flat.gradient[0] == 0.0);
  CHECK(flat.gradient[1] == 0.0);

  // p = 3: value (2/3) at |x| = 2 and a small stationary residual
  RadialSample c = exact_radial(3.0, 2, {2.0, 0.0});
  CHECK(c.value == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(std::abs(stationary_divergence(3.0, {2.0, 0.0}, 1e-3) - 2.0) <= 1e-3);
  CHECK(std::abs(stationary_divergence(2.0, {1.5, 0.8}, 1e-4) - 2.0) <= 1e-4);
}

TEST_CASE("gradient magnitude matches continuously at the flat boundary") {
  for (double p : {1.5, 2.0, 3.0}) {
    const double pp = p / (p - 1.0);
    CHECK(exact_radial(p, 2, {1.0, 0.0}).gradient[0] == 0.0);
    // 1D radial sample: the magnitude follows (r-1)^(p'-1) to 1e-12 relative
    // and decays to zero at the boundary of the flat region
    double prev = kInf;
    for (int k = 1; k <= 40; ++k) {
      const double r = 1.0 + std::pow(2.0, -k);
      const double s = r - 1.0;  // exactly representable here
      const double g = std::hypot(exact_radial(p, 2, {r, 0.0}).gradient[0],
                                  exact_radial(p, 2, {r, 0.0}).gradient[1]);
      CHECK(g == doctest::Approx(std::pow(s, pp - 1.0)).epsilon(1e-12));
      CHECK(g <= prev);
      prev = g;
    }
    CHECK(prev <= std::pow(2.0, -40 * (pp - 1.0)) * (1 + 1e-12));
  }
}

TEST_CASE("scenario builders are pure") {
  Scenario a = scenario_radial_steady(2.0, 2, 32, 1e-4, 0.05);
  Scenario b = scenario_radial_steady(2.0, 2, 32, 1e-4, 0.05);
  CHECK(a.hash() == b.hash());
  Scenario c = scenario_radial_steady(2.0, 2, 64, 1e-4, 0.05);
  CHECK(a.hash() != c.hash());
  CHECK_THROWS_AS(scenario_radial_steady(2.0, 1, 32, 1e-4, 0.05), DomainError);

  Scenario d = scenario_constant(1.0, 2.0, 8, 1e-2, 0.05);
  Scenario e = scenario_constant(1.0, 2.0, 8, 1e-2, 0.05);
  CHECK(d.hash() == e.hash());
}

TEST_CASE("radial scenario: the initial blend honors the boundary data") {
  Scenario sc = scenario_radial_steady(2.0, 2, 16, 1e-3, 0.05);
  ImplicitSolver solver(sc, SolverConfig{});
  VectorField u0 = sc.initial_field(solver.mesh());  // throws on mismatch
  CHECK(u0.values.size() == size_t(solver.mesh()->node_count()));
}

TEST_CASE("constant scenario: trivial run and diagnostics") {
  Scenario sc = scenario_constant(4.0, 2.0, 8, 1e-2, 0.05);
  sc.params.tau = 0.1;
  sc.params.t_end = 1.0;
  Trajectory traj = run(sc, SolverConfig{});
  for (const auto& st : traj.states)
    for (double v : st.values) CHECK(v == 4.0);

  Cylinder cyl;
  cyl.center = {0.5, 0.5};
  cyl.t0 = 1.0;
  cyl.rho = 0.4;
  CHECK(sup_v_eps(traj, sc, cyl) == doctest::Approx(sc.params.eps));
  CHECK(facet_measure(traj.final_state(), sc, sc.params.delta) ==
        doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("channel flow: below the release threshold the plug fills the domain") {
  // bisect the constant forcing at which the steady slope first reaches the
  // detection level, then check the regimes on either side
  const double delta = 0.05;
  auto steady_max_slope = [&](double c) {
    Scenario sc = scenario_bingham_pipe([c](double) { return c; }, "c", 16,
                                        1e-3, delta);
    SolverConfig cfg;
    cfg.mode = SolverMode::kNewtonAfterKacanov;
    cfg.steady_tol = 1e-6;
    VectorField st = steady_state(sc, cfg);
    GradientField grad = element_gradient(st);
    double sup = 0;
    for (int e = 0; e < st.mesh->element_count(); ++e)
      sup = std::max(sup, grad.element(e).frobenius());
    return sup;
  };
  double lo = 0.01, hi = 8.0;
  REQUIRE(steady_max_slope(lo) < delta);
  REQUIRE(steady_max_slope(hi) > delta);
  for (int it = 0; it < 8; ++it) {
    const double mid = 0.5 * (lo + hi);
    (steady_max_slope(mid) < delta ? lo : hi) = mid;
  }
  // below the bracket the whole interior is a plug, above it part releases
  Scenario below = scenario_bingham_pipe([lo](double) { return 0.9 * lo; }, "lo",
                                         16, 1e-3, delta);
  SolverConfig cfg;
  cfg.mode = SolverMode::kNewtonAfterKacanov;
  cfg.steady_tol = 1e-6;
  VectorField ub = steady_state(below, cfg);
  CHECK(facet_measure(ub, below, delta) ==
        doctest::Approx(4.0).epsilon(1e-12));  // the whole box

  Scenario above = scenario_bingham_pipe([hi](double) { return 1.5 * hi; }, "hi",
                                         16, 1e-3, delta);
  VectorField ua = steady_state(above, cfg);
  const double partial = facet_measure(ua, above, delta);
  CHECK(partial > 0.0);
  CHECK(partial < 4.0);
}

TEST_CASE("channel flow: rest stays at rest, forcing wakes a plug") {
  Scenario rest = scenario_bingham_pipe([](double) { return 0.0; }, "zero", 12,
                                        1e-3, 0.05);
  rest.params.t_end = 0.25;
  Trajectory tr = run(rest, SolverConfig{});
  for (const auto& st : tr.states)
    for (double v : st.values) CHECK(v == 0.0);

  // a forcing step: the regularized gradient magnitude responds monotonically
  // and the flat set persists at the center
  Scenario stepped = scenario_bingham_pipe(
      [](double t) { return t < 0.25 ? 0.0 : 1.0; }, "step", 16, 1e-3, 0.05);
  stepped.params.tau = 0.05;
  stepped.params.t_end = 1.0;
  SolverConfig cfg;
  cfg.mode = SolverMode::kNewtonAfterKacanov;
  Trajectory ts = run(stepped, cfg);
  double prev = 0;
  for (size_t k = 1; k < ts.records.size(); ++k) {
    CHECK(ts.records[k].sup_v_eps >= prev - 1e-9);
    prev = ts.records[k].sup_v_eps;
  }
  CHECK(facet_measure(ts.final_state(), stepped, stepped.params.delta) > 0.0);
}
