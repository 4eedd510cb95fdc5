#include "onepflow/model.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "onepflow/grid.hpp"

namespace onepflow {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

}  // namespace

void Parameters::validate_basic() const {
  if (!(p > 1.0)) throw DomainError("p > 1 required, got p = " + fmt(p));
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("eps must be in (0,1)");
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must be in (0,1)");
  if (!(tau > 0.0)) throw DomainError("tau > 0 required");
  if (n != 1 && n != 2) throw DomainError("spatial dimension must be 1 or 2");
  if (N < 1) throw DomainError("component count must be >= 1");
  if (resolution < 2) throw DomainError("resolution >= 2 required");
}

double critical_p(int n) { return 2.0 * n / (n + 2.0); }

double critical_sigma(double p, int n) {
  if (p >= 2.0) return 0.0;
  return (2.0 - p) * n / p;
}

namespace {

// Auxiliary constant sigma > 2 used by the sup-bound exponents for p < 2 in
// dimension two: strictly below both 1 + q/(2 r_hat) and 2/(2-p)_+, capped at
// 2.25 so it stays "close to 2".
double aux_sigma(double p, double q, double r_hat) {
  double cap = kInf;
  if (std::isfinite(q)) cap = std::min(cap, 1.0 + q / (2.0 * r_hat));
  if (p < 2.0) cap = std::min(cap, 2.0 / (2.0 - p));
  if (!std::isfinite(cap)) return 2.25;
  return std::min(2.25, 0.5 * (2.0 + cap));
}

}  // namespace

ExponentReport validate_exponents(const Parameters& params) {
  params.validate_basic();
  const double p = params.p;
  const double q = params.q;
  const double r = params.r;
  const int n = params.n;

  if (!(q > n)) throw ExponentViolation("q must exceed n, got q = " + fmt(q));
  if (!(r > 2.0)) throw ExponentViolation("r must exceed 2, got r = " + fmt(r));

  const double nq = std::isfinite(q) ? n / q : 0.0;
  const double tr = std::isfinite(r) ? 2.0 / r : 0.0;
  if (nq + tr >= 1.0) {
    throw ExponentViolation("admissibility window violated: n/q + 2/r = " +
                            fmt(nq + tr) + " >= 1");
  }

  ExponentReport rep;
  rep.p_c = critical_p(n);
  rep.sigma_c = critical_sigma(p, n);
  rep.supercritical = p > rep.p_c;
  rep.needs_higher_integrability = !rep.supercritical;

  if (!std::isfinite(q) && !std::isfinite(r)) {
    rep.beta = params.beta0;
  } else {
    rep.beta = 1.0 - nq - tr;
  }

  auto half_conjugate = [](double s) {
    if (!std::isfinite(s)) return 1.0;
    if (s <= 2.0) return kInf;  // (s/2)' degenerates; reachable only for n = 1
    return s / (s - 2.0);
  };
  rep.q_hat = half_conjugate(q);
  rep.r_hat = half_conjugate(r);

  rep.pi = std::max(1.0 / (p - 1.0), 2.0 / p);
  if (p >= 2.0) {
    rep.d = 2.0;
    rep.e = (n == 2) ? 2.0 * aux_sigma(p, q, rep.r_hat) : n + 2.0;
  } else if (n == 2) {
    const double s = aux_sigma(p, q, rep.r_hat);
    rep.d = 2.0 - s * (2.0 - p);
    rep.e = 2.0 * s;
  } else {
    // n = 1 is a test-only dimension; the (n+2)(p - p_c) branch stays positive.
    rep.d = (n + 2.0) * (p - rep.p_c);
    rep.e = n + 2.0;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

Profile Profile::power(double s) {
  Profile pr;
  pr.is_power = true;
  pr.s = s;
  pr.descriptor = "power(" + fmt(s) + ")";
  const double e = s / 2.0 - 1.0;
  pr.value = [e](double sigma) { return e == 0.0 ? 1.0 : std::pow(sigma, e); };
  pr.deriv = [e](double sigma) {
    return e == 0.0 ? 0.0 : e * std::pow(sigma, e - 1.0);
  };
  return pr;
}

Profile Profile::table(std::vector<double> sigma, std::vector<double> g) {
  if (sigma.size() != g.size() || sigma.size() < 2)
    throw DomainError("profile table needs >= 2 matching entries");
  for (size_t i = 0; i + 1 < sigma.size(); ++i)
    if (!(sigma[i] < sigma[i + 1]))
      throw DomainError("profile table abscissae must be strictly increasing");
  for (double v : g)
    if (!(v > 0)) throw DomainError("profile table values must be positive");

  auto eval = [sigma, g](double s) {
    if (s <= sigma.front()) return g.front();
    if (s >= sigma.back()) return g.back();
    auto it = std::upper_bound(sigma.begin(), sigma.end(), s);
    size_t i = it - sigma.begin() - 1;
    double w = (s - sigma[i]) / (sigma[i + 1] - sigma[i]);
    return (1 - w) * g[i] + w * g[i + 1];
  };
  auto slope = [sigma, g](double s) {
    if (s <= sigma.front() || s >= sigma.back()) return 0.0;
    auto it = std::upper_bound(sigma.begin(), sigma.end(), s);
    size_t i = it - sigma.begin() - 1;
    return (g[i + 1] - g[i]) / (sigma[i + 1] - sigma[i]);
  };

  Profile pr;
  pr.is_power = false;
  pr.value = eval;
  pr.deriv = slope;
  pr.descriptor = "table(" + std::to_string(sigma.size()) + ")";
  return pr;
}

// ---------------------------------------------------------------------------
// Coefficient model
// ---------------------------------------------------------------------------

GammaField CoefficientModel::identity_gamma() {
  return [](const Coord&, double) { return GammaMat::identity(2); };
}

GammaField CoefficientModel::diag_gamma(double a, double b) {
  return [a, b](const Coord&, double) {
    GammaMat g;
    g.n = 2;
    g.m[0][0] = a;
    g.m[0][1] = g.m[1][0] = 0;
    g.m[1][1] = b;
    return g;
  };
}

GammaField CoefficientModel::rotating_gamma(double omega) {
  return [omega](const Coord&, double t) {
    const double c = std::cos(omega * t), s = std::sin(omega * t);
    // R diag(2, 1/2) R^T
    GammaMat g;
    g.n = 2;
    g.m[0][0] = 2.0 * c * c + 0.5 * s * s;
    g.m[0][1] = g.m[1][0] = 1.5 * c * s;
    g.m[1][1] = 2.0 * s * s + 0.5 * c * c;
    return g;
  };
}

CoefficientModel CoefficientModel::defaults(double p) {
  CoefficientModel m;
  m.a1 = [](const Coord&, double) { return 1.0; };
  m.ap = [](const Coord&, double) { return 1.0; };
  m.gamma = identity_gamma();
  m.g1 = Profile::power(1.0);
  m.gp = Profile::power(p);
  m.gamma0 = 1.0;
  m.Gamma0 = std::max(2.0, 1.0 + std::abs(p / 2.0 - 1.0));
  m.kappa0 = std::min(1.0, p - 1.0);
  m.descriptor = "default(p=" + fmt(p) + ")";
  return m;
}

double gamma_norm(const CoefficientModel& model, const Coord& x, double t,
                  const Mat& zeta) {
  GammaMat g = model.gamma(x, t);
  g.n = zeta.cols();
  return std::sqrt(std::max(0.0, gamma_norm_sq(g, zeta)));
}

// ---------------------------------------------------------------------------
// Structure validation
// ---------------------------------------------------------------------------

namespace {

struct Worst {
  double margin = kInf;
  double at_sigma = 0, at_eps = 0;
  Coord at_x = {0, 0};
  double at_t = 0;
};

std::string witness_sigma(const Worst& w) {
  return "sigma=" + fmt(w.at_sigma) + " eps=" + fmt(w.at_eps);
}

std::string witness_xt(const Worst& w) {
  return "x=(" + fmt(w.at_x[0]) + "," + fmt(w.at_x[1]) + ") t=" + fmt(w.at_t);
}

}  // namespace

StructureReport validate_structure(const CoefficientModel& model, double p,
                                   const SamplingPlan& plan) {
  if (!(p > 1.0)) throw DomainError("p > 1 required");
  StructureReport rep;

  std::vector<double> sigmas(plan.sigma_count);
  for (int i = 0; i < plan.sigma_count; ++i) {
    double u = plan.sigma_count == 1 ? 0.0 : double(i) / (plan.sigma_count - 1);
    sigmas[i] = plan.sigma_lo * std::pow(plan.sigma_hi / plan.sigma_lo, u);
  }
  std::vector<double> epss(plan.eps_count);
  for (int k = 0; k < plan.eps_count; ++k) epss[k] = std::pow(2.0, -(k + 1));

  std::mt19937_64 rng(plan.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<std::pair<Coord, double>> pts(plan.spacetime_count);
  for (auto& pt : pts) {
    pt.first[0] = plan.box_lo[0] + uni(rng) * (plan.box_hi[0] - plan.box_lo[0]);
    pt.first[1] = plan.box_lo[1] + uni(rng) * (plan.box_hi[1] - plan.box_lo[1]);
    pt.second = uni(rng) * plan.t_hi;
  }

  // (a) gamma ellipticity: gamma0 |z|^2 <= z^T gamma z <= |z|^2 / gamma0.
  {
    Worst w;
    double measured = kInf;
    for (const auto& pt : pts) {
      GammaMat g = model.gamma(pt.first, pt.second);
      if (std::abs(g.m[0][1] - g.m[1][0]) > 1e-14 * (1 + std::abs(g.m[0][1])))
        throw StructureViolation("gamma not symmetric at " +
                                 fmt(pt.first[0]) + "," + fmt(pt.first[1]));
      double lo, hi;
      g.eigen_range(lo, hi);
      measured = std::min(measured, std::min(lo, 1.0 / hi));
      double m = std::min(lo - model.gamma0, 1.0 / model.gamma0 - hi);
      if (m < w.margin) {
        w.margin = m;
        w.at_x = pt.first;
        w.at_t = pt.second;
      }
    }
    rep.gamma0_measured = measured;
    ConditionCheck c{"gamma-ellipticity", w.margin, measured, witness_xt(w),
                     w.margin >= -1e-12};
    if (!c.pass)
      throw StructureViolation("gamma ellipticity failed at " + c.witness);
    rep.checks.push_back(c);
  }

  // (b) gp ellipticity: gp(e^2+s) + 2 s min(0, gp'(e^2+s)) >= kappa0 (e^2+s)^(p/2-1).
  {
    Worst w;
    double inf_ratio = kInf;
    for (double eps : epss) {
      for (double s : sigmas) {
        double arg = eps * eps + s;
        double lhs = model.gp.value(arg) + 2.0 * s * std::min(0.0, model.gp.deriv(arg));
        double href = std::pow(arg, p / 2.0 - 1.0);
        inf_ratio = std::min(inf_ratio, lhs / href);
        double m = lhs - model.kappa0 * href;
        double rel = m / std::max(href, 1e-300);
        if (rel < w.margin) {
          w.margin = rel;
          w.at_sigma = s;
          w.at_eps = eps;
        }
      }
    }
    rep.kappa0_measured = inf_ratio;
    ConditionCheck c{"gp-ellipticity", w.margin, inf_ratio, witness_sigma(w),
                     w.margin >= -1e-12};
    if (!c.pass)
      throw StructureViolation("gp ellipticity failed at " + c.witness);
    rep.checks.push_back(c);
  }

  // (c) growth of both profiles: g_s + sigma |g_s'| <= Gamma0 sigma^(s/2-1),
  // with the 1-profile reference constant 3/2.
  auto growth = [&](const Profile& g, double s_exp, double bound,
                    const char* name, double& measured_out) {
    Worst w;
    double sup_ratio = 0;
    for (double s : sigmas) {
      double lhs = g.value(s) + s * std::abs(g.deriv(s));
      double href = std::pow(s, s_exp / 2.0 - 1.0);
      double ratio = lhs / href;
      sup_ratio = std::max(sup_ratio, ratio);
      double rel = (bound * href - lhs) / std::max(bound * href, 1e-300);
      if (rel < w.margin) {
        w.margin = rel;
        w.at_sigma = s;
      }
    }
    measured_out = sup_ratio;
    ConditionCheck c{name, w.margin, sup_ratio, witness_sigma(w),
                     w.margin >= -1e-12};
    if (!c.pass)
      throw StructureViolation(std::string(name) + " failed at " + c.witness);
    rep.checks.push_back(c);
  };
  growth(model.g1, 1.0, 1.5, "g1-growth", rep.growth_g1);
  growth(model.gp, p, model.Gamma0, "gp-growth", rep.growth_gp);

  // (d) coefficient bounds: a1 >= 0, ap >= 1/Gamma0, both <= Gamma0.
  {
    Worst w;
    double min_ap = kInf;
    for (const auto& pt : pts) {
      double a1 = model.a1(pt.first, pt.second);
      double ap = model.ap(pt.first, pt.second);
      min_ap = std::min(min_ap, ap);
      double m = std::min({a1, ap - 1.0 / model.Gamma0, model.Gamma0 - a1,
                           model.Gamma0 - ap});
      if (m < w.margin) {
        w.margin = m;
        w.at_x = pt.first;
        w.at_t = pt.second;
      }
    }
    ConditionCheck c{"coefficient-bounds", w.margin, min_ap, witness_xt(w),
                     w.margin >= -1e-12};
    if (!c.pass)
      throw StructureViolation("coefficient bounds failed at " + c.witness);
    rep.checks.push_back(c);
  }

  // (e) time Lipschitz bound on gamma, by centered differences.
  {
    Worst w;
    double sup_dt = 0;
    const double h = 1e-5 * std::max(plan.t_hi, 1.0);
    for (const auto& pt : pts) {
      double t = std::min(std::max(pt.second, h), plan.t_hi - h);
      GammaMat gp_ = model.gamma(pt.first, t + h);
      GammaMat gm_ = model.gamma(pt.first, t - h);
      double dt = 0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          dt = std::max(dt, std::abs(gp_.m[a][b] - gm_.m[a][b]) / (2 * h));
      sup_dt = std::max(sup_dt, dt);
      double m = model.Gamma0 * (1 + plan.time_lipschitz_rel_tol) - dt;
      if (m < w.margin) {
        w.margin = m;
        w.at_x = pt.first;
        w.at_t = t;
      }
    }
    ConditionCheck c{"gamma-time-lipschitz", w.margin, sup_dt, witness_xt(w),
                     w.margin >= 0};
    if (!c.pass)
      throw StructureViolation("gamma time derivative exceeds Gamma0 at " +
                               c.witness);
    rep.checks.push_back(c);
  }

  rep.pass = true;
  return rep;
}

double modulus_slope(const Profile& g, double c1, double c2) {
  if (!(0 < c1 && c1 < c2)) throw DomainError("need 0 < c1 < c2");
  const int kGrid = 512;
  double slope = 0;
  double prev_s = c1, prev_d = g.deriv(c1);
  for (int i = 1; i <= kGrid; ++i) {
    double s = c1 + (c2 - c1) * i / kGrid;
    double d = g.deriv(s);
    slope = std::max(slope, std::abs(d - prev_d) / (s - prev_s));
    prev_s = s;
    prev_d = d;
  }
  return slope;
}

// ---------------------------------------------------------------------------
// Forcing
// ---------------------------------------------------------------------------

ForcingTerm ForcingTerm::zero(int N) {
  ForcingTerm f;
  f.components = N;
  f.descriptor = "zero";
  f.fn = [N](const Coord&, double, double* out) {
    for (int j = 0; j < N; ++j) out[j] = 0.0;
  };
  return f;
}

ForcingTerm ForcingTerm::constant(std::vector<double> c) {
  ForcingTerm f;
  f.components = static_cast<int>(c.size());
  std::string d = "constant(";
  for (size_t j = 0; j < c.size(); ++j) d += (j ? "," : "") + fmt(c[j]);
  f.descriptor = d + ")";
  f.fn = [c](const Coord&, double, double* out) {
    for (size_t j = 0; j < c.size(); ++j) out[j] = c[j];
  };
  return f;
}

ForcingTerm ForcingTerm::time_rule(std::function<double(double)> f,
                                   std::string descr) {
  ForcingTerm ft;
  ft.components = 1;
  ft.descriptor = std::move(descr);
  ft.fn = [f](const Coord&, double t, double* out) { out[0] = f(t); };
  return ft;
}

double lq_lr_norm(const ForcingTerm& f, const Mesh& mesh,
                  const std::vector<double>& times, double q, double r) {
  if (times.empty()) return 0.0;
  std::vector<double> fx(f.components);
  std::vector<double> slice_norms;
  slice_norms.reserve(times.size());
  for (double t : times) {
    double acc = 0;  // L^q over the slice
    double sup = 0;
    for (int e = 0; e < mesh.element_count(); ++e) {
      Coord c = mesh.element_centroid(e);
      f.fn(c, t, fx.data());
      double mag = 0;
      for (int j = 0; j < f.components; ++j) mag += fx[j] * fx[j];
      mag = std::sqrt(mag);
      if (std::isfinite(q))
        acc += mesh.element_volume(e) * std::pow(mag, q);
      else
        sup = std::max(sup, mag);
    }
    slice_norms.push_back(std::isfinite(q) ? std::pow(acc, 1.0 / q) : sup);
  }
  if (!std::isfinite(r))
    return *std::max_element(slice_norms.begin(), slice_norms.end());
  // uniform weight per slice over the covered span
  double w = times.size() > 1 ? (times.back() - times.front()) / (times.size() - 1)
                              : times.front();
  if (w <= 0) w = 1.0;
  double acc = 0;
  for (double s : slice_norms) acc += w * std::pow(s, r);
  return std::pow(acc, 1.0 / r);
}

}  // namespace onepflow
