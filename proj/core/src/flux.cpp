#include "onepflow/flux.hpp"

#include <algorithm>

namespace onepflow {

namespace {

GammaMat gamma_at(const CoefficientModel& model, const Coord& x, double t, int n) {
  GammaMat g = model.gamma(x, t);
  g.n = n;
  return g;
}

}  // namespace

FluxSample flux_A_eps(const CoefficientModel& model, const Parameters& params,
                      const Coord& x, double t, const Mat& zeta) {
  if (!(params.eps > 0)) throw DomainError("eps > 0 required");
  GammaMat g = gamma_at(model, x, t, zeta.cols());
  const double sigma = gamma_norm_sq(g, zeta);
  const double v2 = params.eps * params.eps + sigma;
  FluxSample s;
  s.v_eps = std::sqrt(v2);
  const double c1 = model.a1(x, t) * model.g1.value(v2);
  const double cp = model.ap(x, t) * model.gp.value(v2);
  s.part1 = c1 * zeta;
  s.partp = cp * zeta;
  s.value = s.part1 + s.partp;
  return s;
}

double scalar_diffusivity(const CoefficientModel& model, double eps,
                          const Coord& x, double t, double sigma) {
  const double v2 = eps * eps + sigma;
  return model.a1(x, t) * model.g1.value(v2) + model.ap(x, t) * model.gp.value(v2);
}

Mat canonical_subgradient(const CoefficientModel& model, const Coord& x,
                          double t, const Mat& zeta) {
  GammaMat g = gamma_at(model, x, t, zeta.cols());
  const double m = std::sqrt(gamma_norm_sq(g, zeta));
  if (m == 0.0) return Mat(zeta.rows(), zeta.cols());
  return (1.0 / m) * zeta;
}

Mat flux_A0(const CoefficientModel& model, const Coord& x, double t,
            const Mat& zeta, const Mat& z_selection) {
  GammaMat g = gamma_at(model, x, t, zeta.cols());
  const double m = std::sqrt(gamma_norm_sq(g, zeta));
  const double zn = std::sqrt(gamma_norm_sq(g, z_selection));
  constexpr double kTol = 1e-12;
  if (zn > 1.0 + kTol)
    throw SubgradientViolation("|Z|_gamma = " + std::to_string(zn) + " > 1");
  if (m > 0) {
    Mat want = (1.0 / m) * zeta;
    Mat diff = z_selection - want;
    if (diff.frobenius() > kTol)
      throw SubgradientViolation("Z must be zeta/|zeta|_gamma away from the facet");
  }
  Mat out = model.a1(x, t) * z_selection;
  if (m > 0) out += (model.ap(x, t) * model.gp.value(m * m)) * zeta;
  return out;
}

// ---------------------------------------------------------------------------
// Bilinear forms
// ---------------------------------------------------------------------------

BilinearEvaluator::BilinearEvaluator(const CoefficientModel& model,
                                     const Parameters& params, const Coord& x,
                                     double t, const Mat& zeta)
    : g_(gamma_at(model, x, t, zeta.cols())),
      N_(zeta.rows()),
      n_(zeta.cols()),
      gz_(zeta.rows(), zeta.cols()) {
  if (!(params.eps > 0)) throw DomainError("eps > 0 required");
  const double sigma = gamma_norm_sq(g_, zeta);
  const double v2 = params.eps * params.eps + sigma;
  const double a1 = model.a1(x, t), ap = model.ap(x, t);
  c1_ = a1 * model.g1.value(v2);
  cp_ = ap * model.gp.value(v2);
  d1_ = 2.0 * a1 * model.g1.deriv(v2);
  dp_ = 2.0 * ap * model.gp.deriv(v2);
  h1_ = std::pow(v2, -0.5);
  hp_ = std::pow(v2, params.p / 2.0 - 1.0);
  lambda0_ = model.kappa0 / model.Gamma0;
  for (int j = 0; j < N_; ++j)
    for (int a = 0; a < n_; ++a) {
      double s = 0;
      for (int b = 0; b < n_; ++b) s += g_.m[a][b] * zeta(j, b);
      gz_(j, a) = s;
    }
}

double BilinearEvaluator::form_A(const std::vector<double>& xi,
                                 const std::vector<double>& eta) const {
  if (xi.size() != size_t(N_) * n_ * n_ || eta.size() != xi.size())
    throw DomainError("form_A expects N*n*n entries");
  auto at = [this](const std::vector<double>& v, int i, int a, int mu) {
    return v[(size_t(i) * n_ + a) * n_ + mu];
  };
  double total = 0;
  // isotropic part: sum_s a_s g_s * gamma_ab gamma_mn xi^i_am eta^i_bn
  for (int i = 0; i < N_; ++i)
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b)
        for (int m = 0; m < n_; ++m)
          for (int nn = 0; nn < n_; ++nn)
            total += (c1_ + cp_) * g_.m[a][b] * g_.m[m][nn] *
                     at(xi, i, a, m) * at(eta, i, b, nn);
  // rank-one part: sum_s 2 a_s g_s' * (gz)^i_a (gz)^j_b gamma_mn xi^i_am eta^j_bn
  for (int m = 0; m < n_; ++m)
    for (int nn = 0; nn < n_; ++nn) {
      double left = 0, right = 0;
      for (int i = 0; i < N_; ++i)
        for (int a = 0; a < n_; ++a) {
          left += gz_(i, a) * at(xi, i, a, m);
          right += gz_(i, a) * at(eta, i, a, nn);
        }
      total += (d1_ + dp_) * g_.m[m][nn] * left * right;
    }
  return total;
}

double BilinearEvaluator::form_B(const Mat& xi, const Mat& eta) const {
  double iso = 0;
  for (int i = 0; i < N_; ++i)
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b)
        iso += g_.m[a][b] * xi(i, a) * eta(i, b);
  double lx = 0, le = 0;
  for (int i = 0; i < N_; ++i)
    for (int a = 0; a < n_; ++a) {
      lx += gz_(i, a) * xi(i, a);
      le += gz_(i, a) * eta(i, a);
    }
  return (c1_ + cp_) * iso + (d1_ + dp_) * lx * le;
}

double BilinearEvaluator::form_C(const Coord& xi, const Coord& eta) const {
  double iso = 0;
  for (int a = 0; a < n_; ++a)
    for (int b = 0; b < n_; ++b) iso += g_.m[a][b] * xi[a] * eta[b];
  // rank-one part contracts the component index of gz against itself
  double total = (c1_ + cp_) * iso;
  double rank1 = 0;
  for (int i = 0; i < N_; ++i) {
    double lx = 0, le = 0;
    for (int a = 0; a < n_; ++a) {
      lx += gz_(i, a) * xi[a];
      le += gz_(i, a) * eta[a];
    }
    rank1 += lx * le;
  }
  return total + (d1_ + dp_) * rank1;
}

// ---------------------------------------------------------------------------
// Gradient map and truncation
// ---------------------------------------------------------------------------

Mat map_G_p_eps(const CoefficientModel& model, const Parameters& params,
                const Coord& x, double t, const Mat& zeta) {
  if (!(params.eps > 0)) throw DomainError("eps > 0 required");
  GammaMat g = gamma_at(model, x, t, zeta.cols());
  const double v2 = params.eps * params.eps + gamma_norm_sq(g, zeta);
  return std::pow(v2, (params.p - 1.0) / 2.0) * zeta;
}

Mat map_G_p_eps_inverse(const CoefficientModel& model, const Parameters& params,
                        const Coord& x, double t, const Mat& eta) {
  if (!(params.eps > 0)) throw DomainError("eps > 0 required");
  GammaMat g = gamma_at(model, x, t, eta.cols());
  const double target = std::sqrt(gamma_norm_sq(g, eta));
  if (target == 0.0) return Mat(eta.rows(), eta.cols());
  const double p = params.p, eps = params.eps;
  auto phi = [&](double m) {
    return std::pow(eps * eps + m * m, (p - 1.0) / 2.0) * m;
  };
  // phi(m) >= m^p and phi(m) >= eps^(p-1) m bracket the root from above
  double hi = std::min(std::pow(target, 1.0 / p),
                       target / std::pow(eps, p - 1.0));
  hi = std::max(hi * 1.0000001, 1e-300);
  double lo = 0.0;
  int steps = 0;
  while (phi(hi) < target) {  // rounding guard; the analytic bracket is tight
    hi *= 2.0;
    if (++steps > 200)
      throw ConvergenceFailure("no bracket for the inverse gradient map");
  }
  while (hi - lo > 4e-16 * std::max(1.0, hi)) {
    if (++steps > 200)
      throw ConvergenceFailure("bisection for the inverse gradient map stalled");
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // interval is one ulp wide
    (phi(mid) < target ? lo : hi) = mid;
  }
  const double m = 0.5 * (lo + hi);
  const double scale = std::pow(eps * eps + m * m, (p - 1.0) / 2.0);
  return (1.0 / scale) * eta;
}

Mat trunc_gradient(const CoefficientModel& model, const Parameters& params,
                   const Coord& x, double t, const Mat& zeta, double level) {
  // the strict level (delta itself) needs eps below it; the doubled level is
  // well-defined for any regularization, the positive part just sets in later
  const bool strict = level <= params.delta * (1 + 1e-12);
  if (strict && !(params.eps < level))
    throw TruncationOrder("truncation level " + std::to_string(level) +
                          " must exceed eps = " + std::to_string(params.eps));
  GammaMat g = gamma_at(model, x, t, zeta.cols());
  const double m2 = gamma_norm_sq(g, zeta);
  const double v = std::sqrt(params.eps * params.eps + m2);
  if (v <= level || m2 == 0.0) return Mat(zeta.rows(), zeta.cols());
  return ((v - level) / std::sqrt(m2)) * zeta;
}

// ---------------------------------------------------------------------------
// Energy density
// ---------------------------------------------------------------------------

namespace {

double half_integral_power(double s_exp, double eps, double sigma) {
  // 1/2 int_0^sigma (eps^2+w)^(s/2-1) dw
  const double e2 = eps * eps;
  const double a = s_exp / 2.0 - 1.0;
  if (std::abs(a + 1.0) < 1e-14)  // s = 0 would integrate to a log; unused
    return 0.5 * (std::log(e2 + sigma) - std::log(e2));
  return 0.5 * (std::pow(e2 + sigma, a + 1.0) - std::pow(e2, a + 1.0)) / (a + 1.0);
}

double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double fa, double fm, double fb, double tol,
                        int depth) {
  if (depth > 40) throw QuadratureFailure("profile antiderivative did not converge");
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double whole = (b - a) / 6.0 * (fa + 4 * fm + fb);
  const double left = (m - a) / 6.0 * (fa + 4 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4 * frm + fb);
  if (std::abs(left + right - whole) < 15 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return adaptive_simpson(f, a, m, fa, flm, fm, tol / 2, depth + 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, tol / 2, depth + 1);
}

double half_integral(const Profile& g, double s_exp, double eps, double sigma) {
  if (sigma <= 0) return 0.0;
  if (g.is_power) return half_integral_power(s_exp, eps, sigma);
  const double e2 = eps * eps;
  auto f = [&](double w) { return g.value(e2 + w); };
  const double fa = f(0.0), fb = f(sigma), fm = f(sigma / 2);
  if (!std::isfinite(fa) || !std::isfinite(fb) || !std::isfinite(fm))
    throw QuadratureFailure("profile not finite on the integration range");
  return 0.5 * adaptive_simpson(f, 0.0, sigma, fa, fm, fb,
                                1e-12 * std::max(1.0, sigma * fb), 0);
}

}  // namespace

double energy_density_from_sigma(const CoefficientModel& model, double p,
                                 double eps, const Coord& x, double t,
                                 double sigma) {
  if (!(eps > 0)) throw DomainError("eps > 0 required");
  return model.a1(x, t) * half_integral(model.g1, 1.0, eps, sigma) +
         model.ap(x, t) * half_integral(model.gp, p, eps, sigma);
}

double energy_density(const CoefficientModel& model, const Parameters& params,
                      const Coord& x, double t, const Mat& zeta) {
  GammaMat g = gamma_at(model, x, t, zeta.cols());
  return energy_density_from_sigma(model, params.p, params.eps, x, t,
                                   gamma_norm_sq(g, zeta));
}

}  // namespace onepflow
