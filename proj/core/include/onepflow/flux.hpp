#pragma once

#include "onepflow/model.hpp"
#include "onepflow/types.hpp"

namespace onepflow {

// ---------------------------------------------------------------------------
// Regularized flux A_eps(x,t,zeta) = a1 g1(v^2) zeta + ap gp(v^2) zeta with
// v = sqrt(eps^2 + |zeta|_gamma^2), and its limit at eps = 0 with the
// subgradient selection in the singular part.
// ---------------------------------------------------------------------------

struct FluxSample {
  Mat value;   // total flux
  Mat part1;   // singular summand
  Mat partp;   // power summand
  double v_eps = 0;
};

FluxSample flux_A_eps(const CoefficientModel& model, const Parameters& params,
                      const Coord& x, double t, const Mat& zeta);

/// Scalar diffusivity a1 g1(eps^2+sigma) + ap gp(eps^2+sigma) at
/// sigma = |zeta|^2_gamma; the coefficient the lagged solver freezes.
double scalar_diffusivity(const CoefficientModel& model, double eps,
                          const Coord& x, double t, double sigma);

/// Limit flux A(x,t,zeta,Z) = a1 Z + ap gp(|zeta|^2_gamma) zeta. The selection
/// Z must be the gamma-unit direction of zeta when zeta != 0 and any point of
/// the gamma-unit ball at zeta = 0; the canonical selection there is Z = 0.
/// Throws SubgradientViolation for inadmissible Z (tolerance 1e-12).
Mat flux_A0(const CoefficientModel& model, const Coord& x, double t,
            const Mat& zeta, const Mat& z_selection);

/// Canonical selection: zeta/|zeta|_gamma, or 0 at the origin.
Mat canonical_subgradient(const CoefficientModel& model, const Coord& x,
                          double t, const Mat& zeta);

// ---------------------------------------------------------------------------
// The three symmetric bilinear forms attached to A_eps at a frozen
// (x,t,zeta,eps): on N-by-n-by-n arrays, on N-by-n matrices (the derivative
// of A_eps paired against the gamma inner product), and on R^n.
// ---------------------------------------------------------------------------
class BilinearEvaluator {
 public:
  BilinearEvaluator(const CoefficientModel& model, const Parameters& params,
                    const Coord& x, double t, const Mat& zeta);

  /// xi, eta flattened as [i][alpha][mu], size N*n*n.
  double form_A(const std::vector<double>& xi, const std::vector<double>& eta) const;
  double form_B(const Mat& xi, const Mat& eta) const;
  /// xi, eta in R^n.
  double form_C(const Coord& xi, const Coord& eta) const;

  double h1() const { return h1_; }  // (eps^2+|zeta|^2_gamma)^(-1/2)
  double hp() const { return hp_; }  // (eps^2+|zeta|^2_gamma)^(p/2-1)
  double lambda0() const { return lambda0_; }
  const GammaMat& gamma() const { return g_; }

 private:
  GammaMat g_;
  int N_, n_;
  Mat gz_;  // gamma-contracted zeta, (gz)^j_a = gamma_ab zeta^j_b
  double c1_, cp_;    // a_s g_s(v^2)
  double d1_, dp_;    // 2 a_s g_s'(v^2)
  double h1_, hp_, lambda0_;
};

// ---------------------------------------------------------------------------
// Bijective gradient map v^(p-1) zeta and its inverse (monotone 1D root find
// on the gamma magnitude, then rescale the direction).
// ---------------------------------------------------------------------------
Mat map_G_p_eps(const CoefficientModel& model, const Parameters& params,
                const Coord& x, double t, const Mat& zeta);
/// Throws ConvergenceFailure past 200 bisection steps.
Mat map_G_p_eps_inverse(const CoefficientModel& model, const Parameters& params,
                        const Coord& x, double t, const Mat& eta);

/// Truncated gradient (v_eps - level)_+ zeta / |zeta|_gamma with
/// level in {delta, 2 delta}. The strict level (level <= delta) throws
/// TruncationOrder when eps >= level; the doubled level has no order
/// constraint.
Mat trunc_gradient(const CoefficientModel& model, const Parameters& params,
                   const Coord& x, double t, const Mat& zeta, double level);

/// Antiderivative density a1 e1(|zeta|^2_gamma) + ap ep(|zeta|^2_gamma) with
/// e_s(sigma) = 1/2 int_0^sigma g_s(eps^2 + w) dw; closed form for power
/// profiles, adaptive quadrature otherwise (QuadratureFailure on breakdown).
/// Its zeta-gradient is the gamma-contraction of A_eps.
double energy_density(const CoefficientModel& model, const Parameters& params,
                      const Coord& x, double t, const Mat& zeta);
/// Same from the scalar magnitude sigma = |zeta|^2_gamma (assembly path).
double energy_density_from_sigma(const CoefficientModel& model, double p,
                                 double eps, const Coord& x, double t,
                                 double sigma);

}  // namespace onepflow
