#pragma once

#include <functional>
#include <optional>

#include "onepflow/types.hpp"

namespace onepflow {

// ---------------------------------------------------------------------------
// Scalar knobs of a run. q = r = kInf is allowed; the admissibility window
// for finite pairs is n/q + 2/r < 1.
// ---------------------------------------------------------------------------
struct Parameters {
  double p = 2.0;        // diffusion exponent, > 1
  double eps = 1e-4;     // regularization, in (0,1)
  double delta = 0.05;   // truncation parameter, in (0,1)
  double q = kInf;       // spatial integrability of the forcing, in (n, inf]
  double r = kInf;       // temporal integrability of the forcing, in (2, inf]
  double beta0 = 0.5;    // fallback Hoelder exponent used when q = r = inf
  double tau = 0.1;      // time step, > 0
  double t_end = 1.0;    // final time
  int n = 2;             // spatial dimension, 1 or 2
  int N = 1;             // component count, >= 1
  int resolution = 32;   // cells per axis, >= 2

  /// Basic range checks (p, tau, n, N, resolution). Throws DomainError.
  void validate_basic() const;
};

/// Derived exponents of the datum set.
struct ExponentReport {
  double p_c = 0;        // critical exponent 2n/(n+2)
  double sigma_c = 0;    // (2-p)n/p for p < 2, else 0
  double beta = 0;       // 1 - n/q - 2/r, or beta0 when q = r = inf
  double q_hat = 0;      // (q/2)'
  double r_hat = 0;      // (r/2)'
  bool supercritical = false;       // p > p_c
  bool needs_higher_integrability = false;  // p <= p_c
  double pi = 0;         // max{1/(p-1), 2/p}
  double d = 0;          // sup-bound exponent (see moser_d)
  double e = 0;          // cutoff-decay exponent (see moser_e)
};

// Pure formula helpers, valid for any n >= 1 (used by arithmetic checks).
double critical_p(int n);
double critical_sigma(double p, int n);

/// Checks the admissibility window and fills every derived exponent.
/// Throws ExponentViolation when n/q + 2/r >= 1, DomainError when p <= 1.
ExponentReport validate_exponents(const Parameters& params);

// ---------------------------------------------------------------------------
// Scalar diffusivity profiles g_s : (0,inf) -> (0,inf) with first derivative.
// The default "power" profile is g_s(sigma) = sigma^(s/2-1); user tables are
// interpolated linearly.
// ---------------------------------------------------------------------------
struct Profile {
  std::function<double(double)> value;
  std::function<double(double)> deriv;
  bool is_power = false;  // enables the closed-form antiderivative
  double s = 2.0;         // exponent for power profiles
  std::string descriptor = "power";

  static Profile power(double s);
  /// Piecewise-linear table on strictly increasing abscissae (extended
  /// constantly outside the range). Values must be positive.
  static Profile table(std::vector<double> sigma, std::vector<double> g);
};

using ScalarField = std::function<double(const Coord&, double)>;
using GammaField = std::function<GammaMat(const Coord&, double)>;

// ---------------------------------------------------------------------------
// Coefficients of the operator: weights a1 >= 0 and ap >= 1/Gamma0, the
// symmetric matrix field gamma, and the two profiles. gamma0, Gamma0, kappa0
// are the declared structure constants the validation sweep checks against.
// ---------------------------------------------------------------------------
struct CoefficientModel {
  ScalarField a1;
  ScalarField ap;
  GammaField gamma;
  Profile g1;
  Profile gp;
  double gamma0 = 1.0;   // ellipticity constant of gamma, in (0,1]
  double Gamma0 = 2.0;   // growth constant, > 1
  double kappa0 = 1.0;   // ellipticity constant of gp, > 0
  std::string descriptor = "default";

  /// a1 = ap = 1, identity gamma, power profiles, kappa0 = min(1, p-1).
  static CoefficientModel defaults(double p);
  static GammaField identity_gamma();
  static GammaField diag_gamma(double a, double b);
  /// diag(2, 1/2) rotated rigidly in time with angular speed omega.
  static GammaField rotating_gamma(double omega);
};

/// |zeta|_gamma at (x,t) for an N-by-n matrix. Satisfies
/// sqrt(gamma0)|zeta| <= |zeta|_gamma <= |zeta|/sqrt(gamma0).
double gamma_norm(const CoefficientModel& model, const Coord& x, double t,
                  const Mat& zeta);

// ---------------------------------------------------------------------------
// Structure validation by sampling.
// ---------------------------------------------------------------------------
struct SamplingPlan {
  double sigma_lo = 1e-8;
  double sigma_hi = 1e8;
  int sigma_count = 65;        // log-spaced
  int eps_count = 20;          // eps = 2^-k, k = 1..eps_count
  int spacetime_count = 64;    // random (x,t) samples for gamma / a_s
  Coord box_lo = {0, 0};
  Coord box_hi = {1, 1};
  double t_hi = 1.0;
  uint64_t seed = 0;
  double time_lipschitz_rel_tol = 1e-6;  // scaled by Gamma0
};

struct ConditionCheck {
  std::string name;
  double worst_margin = 0;     // >= 0 means the condition held everywhere
  double measured_constant = 0;
  std::string witness;
  bool pass = false;
};

struct StructureReport {
  std::vector<ConditionCheck> checks;
  double gamma0_measured = 0;  // min over samples of min(lambda_min, 1/lambda_max)
  double kappa0_measured = 0;  // inf ratio of the gp ellipticity bound
  double growth_g1 = 0;        // sup of (g1 + sigma|g1'|) / sigma^(-1/2)
  double growth_gp = 0;        // sup of (gp + sigma|gp'|) / sigma^(p/2-1)
  bool pass = false;
};

/// Samples the declared structure conditions over the plan's grids. Throws
/// StructureViolation naming the failed inequality and a witness point.
StructureReport validate_structure(const CoefficientModel& model, double p,
                                   const SamplingPlan& plan);

/// Linear modulus of continuity for a profile derivative on [c1, c2]:
/// slope = max |g''| estimated by differencing g' on a fine grid.
double modulus_slope(const Profile& g, double c1, double c2);

// ---------------------------------------------------------------------------
// Forcing term: a rule sampled at element centroids, R^N-valued.
// ---------------------------------------------------------------------------
struct ForcingTerm {
  /// Writes N components at (x,t).
  std::function<void(const Coord&, double, double*)> fn;
  int components = 1;
  std::string descriptor = "zero";

  static ForcingTerm zero(int N);
  static ForcingTerm constant(std::vector<double> c);
  /// Uniform-in-space scalar rule f(t), N = 1.
  static ForcingTerm time_rule(std::function<double(double)> f, std::string descr);
};

class Mesh;  // grid module

/// Discrete L^q-in-space / L^r-in-time norm: per-slice element quadrature,
/// then the r-norm over the time grid (max when r = inf). The time grid
/// carries uniform weight spacing.
double lq_lr_norm(const ForcingTerm& f, const Mesh& mesh,
                  const std::vector<double>& times, double q, double r);

}  // namespace onepflow
