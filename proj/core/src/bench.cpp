#include "onepflow/bench.hpp"

#include <sstream>

namespace onepflow {

RadialSample exact_radial(double p, int n, const Coord& x) {
  if (!(p > 1.0)) throw DomainError("p > 1 required");
  const double pp = p / (p - 1.0);
  double r = 0;
  for (int a = 0; a < n; ++a) r += x[a] * x[a];
  r = std::sqrt(r);
  RadialSample s;
  if (r <= 1.0) return s;
  const double m = r - 1.0;
  s.value = std::pow(m, pp) / pp;
  const double gmag = std::pow(m, pp - 1.0);
  for (int a = 0; a < n; ++a) s.gradient[a] = gmag * x[a] / r;
  return s;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

}  // namespace

Scenario scenario_radial_steady(double p, int n, int resolution, double eps,
                                double delta) {
  if (n != 2) throw DomainError("the radial benchmark is two-dimensional");
  Scenario sc;
  sc.params.p = p;
  sc.params.eps = eps;
  sc.params.delta = delta;
  sc.params.n = 2;
  sc.params.N = 1;
  sc.params.resolution = resolution;
  sc.params.tau = 0.25;
  sc.params.t_end = 50.0;
  sc.model = CoefficientModel::defaults(p);
  sc.box.lo = {-2, -2};
  sc.box.hi = {2, 2};
  sc.forcing = ForcingTerm::constant({-double(n)});
  sc.boundary = [p](const Coord& x, double, double* out) {
    out[0] = exact_radial(p, 2, x).value;
  };
  // linear blend of the four boundary traces
  sc.initial = [p, box = sc.box](const Coord& x, double* out) {
    const double sx = (x[0] - box.lo[0]) / (box.hi[0] - box.lo[0]);
    const double sy = (x[1] - box.lo[1]) / (box.hi[1] - box.lo[1]);
    auto tr = [p](double a, double b) {
      return exact_radial(p, 2, {a, b}).value;
    };
    const double ex = (1 - sx) * tr(box.lo[0], x[1]) + sx * tr(box.hi[0], x[1]);
    const double ey = (1 - sy) * tr(x[0], box.lo[1]) + sy * tr(x[0], box.hi[1]);
    const double cx = (1 - sx) * ((1 - sy) * tr(box.lo[0], box.lo[1]) +
                                  sy * tr(box.lo[0], box.hi[1])) +
                      sx * ((1 - sy) * tr(box.hi[0], box.lo[1]) +
                            sy * tr(box.hi[0], box.hi[1]));
    out[0] = ex + ey - cx;  // transfinite blend, exact on the boundary
  };
  sc.descriptor = "radial-steady(p=" + fmt(p) +
                  ",res=" + std::to_string(resolution) + ",eps=" + fmt(eps) +
                  ",delta=" + fmt(delta) + ")";
  return sc;
}

Scenario scenario_bingham_pipe(std::function<double(double)> forcing,
                               std::string forcing_descriptor, int resolution,
                               double eps, double delta) {
  Scenario sc;
  sc.params.p = 2.0;
  sc.params.eps = eps;
  sc.params.delta = delta;
  sc.params.n = 2;
  sc.params.N = 1;
  sc.params.resolution = resolution;
  sc.params.tau = 0.05;
  sc.params.t_end = 2.0;
  sc.model = CoefficientModel::defaults(2.0);
  sc.box.lo = {-1, -1};
  sc.box.hi = {1, 1};
  sc.forcing = ForcingTerm::time_rule(std::move(forcing), forcing_descriptor);
  sc.boundary = [](const Coord&, double, double* out) { out[0] = 0.0; };
  sc.initial = [](const Coord&, double* out) { out[0] = 0.0; };
  sc.descriptor = "bingham-pipe(f=" + forcing_descriptor +
                  ",res=" + std::to_string(resolution) + ",eps=" + fmt(eps) + ")";
  return sc;
}

Scenario scenario_constant(double c, double p, int resolution, double eps,
                           double delta) {
  Scenario sc;
  sc.params.p = p;
  sc.params.eps = eps;
  sc.params.delta = delta;
  sc.params.n = 2;
  sc.params.N = 1;
  sc.params.resolution = resolution;
  sc.params.tau = 0.1;
  sc.params.t_end = 1.0;
  sc.model = CoefficientModel::defaults(p);
  sc.box.lo = {0, 0};
  sc.box.hi = {1, 1};
  sc.forcing = ForcingTerm::zero(1);
  sc.boundary = [c](const Coord&, double, double* out) { out[0] = c; };
  sc.initial = [c](const Coord&, double* out) { out[0] = c; };
  sc.descriptor = "constant(c=" + fmt(c) + ",p=" + fmt(p) +
                  ",res=" + std::to_string(resolution) + ")";
  return sc;
}

}  // namespace onepflow
