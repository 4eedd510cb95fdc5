#include <doctest.h>

#include <random>

#include "onepflow/grid.hpp"
#include "onepflow/model.hpp"

using namespace onepflow;

TEST_CASE("exponent window accepts the admissible pair and fills exponents") {
  Parameters pr;
  pr.n = 2;
  pr.q = kInf;
  pr.r = 3.0;
  pr.p = 2.0;
  ExponentReport rep = validate_exponents(pr);
  CHECK(rep.p_c == doctest::Approx(1.0));
  CHECK(rep.supercritical);
  CHECK(rep.beta == doctest::Approx(1.0 - 2.0 / 3.0));
  CHECK(rep.sigma_c == 0.0);
  CHECK(rep.r_hat == doctest::Approx(3.0));
  CHECK(rep.q_hat == doctest::Approx(1.0));
  CHECK(rep.pi == doctest::Approx(1.0));
  CHECK(rep.d == doctest::Approx(2.0));
  CHECK(rep.e > 4.0);  // 2 sigma with sigma > 2
}

TEST_CASE("exponent window rejects the boundary pair") {
  Parameters pr;
  pr.n = 2;
  pr.q = 2.0;
  pr.r = kInf;
  CHECK_THROWS_AS(validate_exponents(pr), ExponentViolation);
  pr.q = 2.5;
  pr.r = 4.0;  // 2/2.5 + 2/4 = 1.3 >= 1
  CHECK_THROWS_AS(validate_exponents(pr), ExponentViolation);
}

TEST_CASE("singular-range exponent evaluates by the formula") {
  // (2 - 1.2) * 2 / 1.2 = 4/3, computed directly from the formula
  Parameters pr;
  pr.n = 2;
  pr.p = 1.2;
  ExponentReport rep = validate_exponents(pr);
  CHECK(rep.sigma_c == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
  CHECK(rep.needs_higher_integrability == false);  // p_c(2) = 1 < 1.2
  CHECK(rep.d > 0.0);
}

TEST_CASE("p at or below one is a domain error") {
  Parameters pr;
  pr.p = 0.9;
  CHECK_THROWS_AS(validate_exponents(pr), DomainError);
  pr.p = 1.0;
  CHECK_THROWS_AS(validate_exponents(pr), DomainError);
}

TEST_CASE("critical exponents: arithmetic identities for simulated dimensions") {
  CHECK(critical_p(2) == doctest::Approx(1.0));
  CHECK(critical_p(1) == doctest::Approx(2.0 / 3.0));
  for (int n = 3; n <= 6; ++n) {
    const double pc = critical_p(n);
    for (double p : {1.0 + 1e-9, 0.5 * (1 + pc), pc}) {
      CHECK(critical_sigma(p, n) >= 2.0 - 1e-9);
    }
  }
}

TEST_CASE("beta falls back to the configured constant for bounded data") {
  Parameters pr;
  pr.q = kInf;
  pr.r = kInf;
  pr.beta0 = 0.37;
  CHECK(validate_exponents(pr).beta == doctest::Approx(0.37));
}

TEST_CASE("gamma norm: hand values") {
  CoefficientModel m = CoefficientModel::defaults(2.0);
  Mat zeta(1, 2);
  zeta(0, 0) = 3;
  zeta(0, 1) = 4;
  CHECK(gamma_norm(m, {0, 0}, 0, zeta) == doctest::Approx(5.0).epsilon(1e-15));

  m.gamma = CoefficientModel::diag_gamma(4.0, 1.0);
  Mat e1(1, 2);
  e1(0, 0) = 1;
  CHECK(gamma_norm(m, {0, 0}, 0, e1) == doctest::Approx(2.0).epsilon(1e-15));

  Mat zero(1, 2);
  CHECK(gamma_norm(m, {0, 0}, 0, zero) == 0.0);
}

TEST_CASE("norm equivalence holds at every sample") {
  CoefficientModel m = CoefficientModel::defaults(2.0);
  m.gamma = CoefficientModel::rotating_gamma(0.7);
  m.gamma0 = 0.5;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int k = 0; k < 10000; ++k) {
    Coord x = {uni(rng), uni(rng)};
    double t = uni(rng);
    Mat z(2, 2);
    for (auto& v : z.data()) v = gauss(rng);
    double nz2 = 0;
    for (double v : z.data()) nz2 += v * v;
    const double ng = gamma_norm(m, x, t, z);
    CHECK(ng * ng >= m.gamma0 * nz2 - 1e-12 * nz2);
    CHECK(ng * ng <= nz2 / m.gamma0 + 1e-12 * nz2);
  }
}

TEST_CASE("gamma norm varies Lipschitz-continuously in time") {
  CoefficientModel m = CoefficientModel::defaults(2.0);
  const double omega = 0.9;
  m.gamma = CoefficientModel::rotating_gamma(omega);
  m.gamma0 = 0.5;
  std::mt19937_64 rng(13);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  // |gamma'| is bounded by 1.5 omega entrywise, so the norm moves at most
  // ~ c |t - s| |zeta| with c controlled by the eigenvalue floor
  const double slope_cap = 2.0 * 1.5 * omega / std::sqrt(0.5);
  for (int k = 0; k < 2000; ++k) {
    Mat z(1, 2);
    for (auto& v : z.data()) v = gauss(rng);
    const double t = uni(rng), s = uni(rng);
    const double nt = gamma_norm(m, {0, 0}, t, z);
    const double ns = gamma_norm(m, {0, 0}, s, z);
    double nz = 0;
    for (double v : z.data()) nz += v * v;
    CHECK(std::abs(nt - ns) <= slope_cap * std::abs(t - s) * std::sqrt(nz) + 1e-12);
  }
}

TEST_CASE("structure sweep: default profiles pass with the known constants") {
  for (double p : {1.5, 2.0, 3.0}) {
    CoefficientModel m = CoefficientModel::defaults(p);
    StructureReport rep = validate_structure(m, p, SamplingPlan{});
    CHECK(rep.pass);
    // the ellipticity constant is min(1, p-1) and the singular-profile
    // growth constant is 3/2, both attained on the sampling grid
    CHECK(rep.kappa0_measured ==
          doctest::Approx(std::min(1.0, p - 1.0)).epsilon(1e-12));
    CHECK(rep.growth_g1 == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(rep.growth_gp <= m.Gamma0 + 1e-12);
  }
}

TEST_CASE("structure sweep: diagonal coefficient matrix measures its extremes") {
  CoefficientModel m = CoefficientModel::defaults(2.0);
  m.gamma = CoefficientModel::diag_gamma(2.0, 0.5);
  m.gamma0 = 0.5;
  m.Gamma0 = 4.0;
  StructureReport rep = validate_structure(m, 2.0, SamplingPlan{});
  CHECK(rep.pass);
  CHECK(rep.gamma0_measured == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("structure sweep is deterministic for a fixed plan") {
  CoefficientModel m = CoefficientModel::defaults(1.5);
  m.gamma = CoefficientModel::rotating_gamma(0.3);
  m.gamma0 = 0.5;
  m.Gamma0 = 6.0;
  SamplingPlan plan;
  plan.seed = 42;
  StructureReport a = validate_structure(m, 1.5, plan);
  StructureReport b = validate_structure(m, 1.5, plan);
  REQUIRE(a.checks.size() == b.checks.size());
  for (size_t i = 0; i < a.checks.size(); ++i) {
    CHECK(a.checks[i].worst_margin == b.checks[i].worst_margin);
    CHECK(a.checks[i].witness == b.checks[i].witness);
  }
}

TEST_CASE("structure sweep rejects a weight below the declared floor") {
  CoefficientModel m = CoefficientModel::defaults(2.0);
  m.ap = [](const Coord&, double) { return 0.1; };  // below 1/Gamma0 = 0.5
  CHECK_THROWS_AS(validate_structure(m, 2.0, SamplingPlan{}), StructureViolation);
}

TEST_CASE("structure sweep rejects a profile without the ellipticity bound") {
  CoefficientModel m = CoefficientModel::defaults(3.0);
  // flat tail: g stays near 1 while sigma^(p/2-1) grows without bound
  m.gp = Profile::table({1e-8, 1.0, 1e8}, {1.0, 1.0, 1.0});
  CHECK_THROWS_AS(validate_structure(m, 3.0, SamplingPlan{}), StructureViolation);
}

TEST_CASE("modulus slope matches the second derivative of the power profile") {
  Profile gp = Profile::power(3.0);
  // d2/dsigma2 sigma^(1/2) = -1/4 sigma^(-3/2), largest at the left endpoint
  const double slope = modulus_slope(gp, 0.5, 2.0);
  CHECK(slope == doctest::Approx(0.25 * std::pow(0.5, -1.5)).epsilon(0.05));
}

TEST_CASE("profile tables interpolate linearly and reject bad input") {
  Profile t = Profile::table({1.0, 2.0, 4.0}, {2.0, 4.0, 4.0});
  CHECK(t.value(1.5) == doctest::Approx(3.0));
  CHECK(t.deriv(1.5) == doctest::Approx(2.0));
  CHECK(t.value(0.5) == doctest::Approx(2.0));  // constant extension
  CHECK(t.value(8.0) == doctest::Approx(4.0));
  CHECK_THROWS_AS(Profile::table({1.0}, {1.0}), DomainError);
  CHECK_THROWS_AS(Profile::table({2.0, 1.0}, {1.0, 1.0}), DomainError);
  CHECK_THROWS_AS(Profile::table({1.0, 2.0}, {1.0, -1.0}), DomainError);
}

TEST_CASE("mixed-norm of the forcing: closed forms") {
  auto mesh = build_mesh({{0, 0}, {1, 1}}, 8);
  std::vector<double> times;
  for (int k = 1; k <= 10; ++k) times.push_back(0.1 * k);

  ForcingTerm fc = ForcingTerm::constant({-3.0});
  CHECK(lq_lr_norm(fc, mesh, times, 2.0, 2.0) == doctest::Approx(3.0).epsilon(1e-12));

  ForcingTerm fz = ForcingTerm::zero(1);
  CHECK(lq_lr_norm(fz, mesh, times, 2.0, 2.0) == 0.0);

  ForcingTerm f1 = ForcingTerm::constant({1.0});
  CHECK(lq_lr_norm(f1, mesh, times, kInf, kInf) == doctest::Approx(1.0));
}

TEST_CASE("basic parameter validation") {
  Parameters pr;
  pr.tau = 0.0;
  CHECK_THROWS_AS(pr.validate_basic(), DomainError);
  pr.tau = 0.1;
  pr.resolution = 1;
  CHECK_THROWS_AS(pr.validate_basic(), DomainError);
  pr.resolution = 4;
  pr.n = 3;
  CHECK_THROWS_AS(pr.validate_basic(), DomainError);
}
