#include "onepflow/diagnostics.hpp"

#include <algorithm>
#include <random>

#include <json.hpp>

#include "onepflow/flux.hpp"

namespace onepflow {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

void DiagnosticsReport::add(std::string key, double value, std::string refs) {
  entries.push_back({std::move(key), value, std::nullopt, std::nullopt,
                     std::move(refs)});
}

void DiagnosticsReport::add_checked(std::string key, double value,
                                    double threshold, bool pass,
                                    std::string refs) {
  entries.push_back({std::move(key), value, threshold, pass, std::move(refs)});
}

bool DiagnosticsReport::all_pass() const {
  for (const auto& e : entries)
    if (e.pass.has_value() && !*e.pass) return false;
  return true;
}

std::string DiagnosticsReport::to_json() const {
  json j;
  j["entries"] = json::array();
  for (const auto& e : entries) {
    json je;
    je["key"] = e.key;
    je["value"] = e.value;
    if (e.threshold) je["threshold"] = *e.threshold;
    if (e.pass) je["pass"] = *e.pass;
    if (!e.refs.empty()) je["refs"] = e.refs;
    j["entries"].push_back(je);
  }
  json jp;
  jp["scenario_hash"] = provenance.scenario_hash;
  jp["mesh"] = provenance.mesh;
  jp["eps"] = provenance.eps;
  jp["delta"] = provenance.delta;
  jp["seed"] = provenance.seed;
  jp["timestamp"] = provenance.timestamp;
  j["provenance"] = jp;
  return j.dump(2);
}

DiagnosticsReport DiagnosticsReport::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("diagnostics JSON: ") + e.what());
  }
  DiagnosticsReport rep;
  for (const auto& je : j.at("entries")) {
    ReportEntry e;
    e.key = je.at("key").get<std::string>();
    e.value = je.at("value").get<double>();
    if (je.contains("threshold")) e.threshold = je["threshold"].get<double>();
    if (je.contains("pass")) e.pass = je["pass"].get<bool>();
    if (je.contains("refs")) e.refs = je["refs"].get<std::string>();
    rep.entries.push_back(std::move(e));
  }
  const auto& jp = j.at("provenance");
  rep.provenance.scenario_hash = jp.at("scenario_hash").get<uint64_t>();
  rep.provenance.mesh = jp.at("mesh").get<std::string>();
  rep.provenance.eps = jp.at("eps").get<double>();
  rep.provenance.delta = jp.at("delta").get<double>();
  rep.provenance.seed = jp.at("seed").get<uint64_t>();
  rep.provenance.timestamp = jp.at("timestamp").get<std::string>();
  return rep;
}

// ---------------------------------------------------------------------------
// Cylinder
// ---------------------------------------------------------------------------

bool Cylinder::contains(const Coord& x, double t, int dim) const {
  double d2 = 0;
  for (int a = 0; a < dim; ++a) {
    const double d = x[a] - center[a];
    d2 += d * d;
  }
  if (!(d2 < rho * rho)) return false;
  return t > t0 - rho * rho && t <= t0;
}

void Cylinder::check_against(const Mesh& mesh, double t_lo, double t_hi) const {
  if (!(rho > 0)) throw CylinderOutOfDomain("cylinder radius must be positive");
  if (rho < 2 * mesh.h())
    throw CylinderOutOfDomain("cylinder narrower than two mesh cells");
  for (int a = 0; a < mesh.dim(); ++a) {
    if (center[a] - rho < mesh.box().lo[a] - 1e-12 ||
        center[a] + rho > mesh.box().hi[a] + 1e-12)
      throw CylinderOutOfDomain("cylinder leaves the spatial box");
  }
  if (t0 - rho * rho < t_lo - 1e-12 || t0 > t_hi + 1e-12)
    throw CylinderOutOfDomain("cylinder leaves the computed time range");
}

// ---------------------------------------------------------------------------
// Pointwise quantities
// ---------------------------------------------------------------------------

namespace {

double element_sigma(const Mesh& mesh, const CoefficientModel& model,
                     const GradientField& grad, int e, double t) {
  GammaMat g = model.gamma(mesh.element_centroid(e), t);
  g.n = mesh.dim();
  const double* blk = grad.block(e);
  double sigma = 0;
  for (int j = 0; j < grad.components; ++j)
    sigma += g.form(blk + j * mesh.dim(), blk + j * mesh.dim());
  return sigma;
}

}  // namespace

namespace {

// A one-state trajectory is read as a stationary field covering any time
// window; marches are filtered to the slices inside the cylinder interval.
bool is_stationary(const Trajectory& traj) { return traj.states.size() == 1; }

void check_cylinder(const Cylinder& cyl, const Trajectory& traj) {
  if (is_stationary(traj)) {
    cyl.check_against(*traj.mesh, cyl.t0 - cyl.rho * cyl.rho, cyl.t0);
  } else {
    cyl.check_against(*traj.mesh, traj.states.front().time,
                      traj.states.back().time);
  }
}

bool slice_in_window(const Trajectory& traj, const Cylinder& cyl, double t) {
  if (is_stationary(traj)) return true;
  return t > cyl.t0 - cyl.rho * cyl.rho && t <= cyl.t0 + 1e-12;
}

}  // namespace

double sup_v_eps(const Trajectory& traj, const Scenario& scenario,
                 const Cylinder& cyl) {
  const Mesh& mesh = *traj.mesh;
  check_cylinder(cyl, traj);
  const double eps = scenario.params.eps;
  double sup = 0;
  bool hit = false;
  for (const auto& state : traj.states) {
    if (!slice_in_window(traj, cyl, state.time)) continue;
    GradientField grad = element_gradient(state);
    for (int e = 0; e < mesh.element_count(); ++e) {
      const double t_eff = is_stationary(traj) ? cyl.t0 : state.time;
      if (!cyl.contains(mesh.element_centroid(e), t_eff, mesh.dim())) continue;
      hit = true;
      const double sigma = element_sigma(mesh, scenario.model, grad, e, state.time);
      sup = std::max(sup, std::sqrt(eps * eps + sigma));
    }
  }
  if (!hit) throw CylinderOutOfDomain("no trajectory samples inside the cylinder");
  return sup;
}

double facet_measure(const VectorField& state, const Scenario& scenario,
                     double delta) {
  if (!(delta > scenario.params.eps))
    throw TruncationOrder("facet threshold must exceed eps");
  const Mesh& mesh = *state.mesh;
  GradientField grad = element_gradient(state);
  double vol = 0;
  for (int e = 0; e < mesh.element_count(); ++e) {
    const double sigma = element_sigma(mesh, scenario.model, grad, e, state.time);
    if (std::sqrt(sigma) < delta) vol += mesh.element_volume(e);
  }
  return vol;
}

namespace {

struct SpaceTimeSample {
  Coord x;
  double t;
  int element;
  int state_index;
};

double parabolic_distance(const SpaceTimeSample& a, const SpaceTimeSample& b) {
  double dx2 = 0;
  for (int k = 0; k < 2; ++k) {
    const double d = a.x[k] - b.x[k];
    dx2 += d * d;
  }
  return std::max(std::sqrt(dx2), std::sqrt(std::abs(a.t - b.t)));
}

}  // namespace

double holder_seminorm(const Trajectory& traj, const Scenario& scenario,
                       double delta, const Cylinder& cyl,
                       const HolderOptions& opt) {
  if (!(scenario.params.eps < delta / 4))
    throw TruncationOrder("holder seminorm needs eps < delta/4");
  if (!(opt.alpha > 0 && opt.alpha < 1))
    throw DomainError("alpha must be in (0,1)");
  const Mesh& mesh = *traj.mesh;
  check_cylinder(cyl, traj);
  const double min_sep = opt.min_separation > 0 ? opt.min_separation : 2 * mesh.h();

  // states whose time falls inside the cylinder's interval
  std::vector<int> sidx;
  for (size_t s = 0; s < traj.states.size(); ++s) {
    if (slice_in_window(traj, cyl, traj.states[s].time))
      sidx.push_back(static_cast<int>(s));
  }
  if (sidx.empty())
    throw CylinderOutOfDomain("no trajectory slices inside the cylinder");

  std::vector<GradientField> grads;
  grads.reserve(sidx.size());
  for (int s : sidx) grads.push_back(element_gradient(traj.states[s]));

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::uniform_real_distribution<double> uni01(0.0, 1.0);

  auto draw = [&]() {
    SpaceTimeSample s{};
    for (int tries = 0; tries < 10000; ++tries) {
      Coord x = cyl.center;
      x[0] += cyl.rho * uni(rng);
      if (mesh.dim() == 2) x[1] += cyl.rho * uni(rng);
      const int si = std::min<int>(static_cast<int>(uni01(rng) * sidx.size()),
                                   static_cast<int>(sidx.size()) - 1);
      const double t = is_stationary(traj)
                           ? cyl.t0 - cyl.rho * cyl.rho * uni01(rng)
                           : traj.states[sidx[si]].time;
      if (!cyl.contains(x, t, mesh.dim())) continue;
      s.x = x;
      s.t = t;
      s.element = mesh.locate(x);
      s.state_index = si;
      return s;
    }
    throw CylinderOutOfDomain("pair sampling failed to land in the cylinder");
  };

  const double two_delta = 2 * delta;
  auto trunc_at = [&](const SpaceTimeSample& s) {
    const GradientField& g = grads[s.state_index];
    const Coord c = mesh.element_centroid(s.element);
    return trunc_gradient(scenario.model, scenario.params, c, s.t,
                          g.element(s.element), two_delta);
  };

  double sup = 0;
  int accepted = 0;
  while (accepted < opt.sample_count) {
    SpaceTimeSample a = draw(), b = draw();
    const double d = parabolic_distance(a, b);
    if (d < min_sep) continue;
    ++accepted;
    Mat diff = trunc_at(a) - trunc_at(b);
    sup = std::max(sup, diff.frobenius() / std::pow(d, opt.alpha));
  }
  return sup;
}

double holder_u_seminorm(const Trajectory& traj, const Cylinder& cyl,
                         const HolderOptions& opt) {
  const Mesh& mesh = *traj.mesh;
  check_cylinder(cyl, traj);
  const double min_sep = opt.min_separation > 0 ? opt.min_separation : 2 * mesh.h();

  std::vector<int> sidx;
  for (size_t s = 0; s < traj.states.size(); ++s)
    if (slice_in_window(traj, cyl, traj.states[s].time))
      sidx.push_back(static_cast<int>(s));
  if (sidx.empty())
    throw CylinderOutOfDomain("no trajectory slices inside the cylinder");

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::uniform_real_distribution<double> uni01(0.0, 1.0);
  auto draw = [&]() {
    SpaceTimeSample s{};
    for (int tries = 0; tries < 10000; ++tries) {
      Coord x = cyl.center;
      x[0] += cyl.rho * uni(rng);
      if (mesh.dim() == 2) x[1] += cyl.rho * uni(rng);
      const int si = std::min<int>(static_cast<int>(uni01(rng) * sidx.size()),
                                   static_cast<int>(sidx.size()) - 1);
      const double t = is_stationary(traj)
                           ? cyl.t0 - cyl.rho * cyl.rho * uni01(rng)
                           : traj.states[sidx[si]].time;
      if (!cyl.contains(x, t, mesh.dim())) continue;
      s.x = x;
      s.t = t;
      s.state_index = si;
      return s;
    }
    throw CylinderOutOfDomain("pair sampling failed to land in the cylinder");
  };

  const int N = traj.states.front().components;
  auto value_at = [&](const SpaceTimeSample& s, int j) {
    return interpolate_value(traj.states[sidx[s.state_index]], s.x, j);
  };

  double sup = 0;
  int accepted = 0;
  while (accepted < opt.sample_count) {
    SpaceTimeSample a = draw(), b = draw();
    const double d = parabolic_distance(a, b);
    if (d < min_sep) continue;
    ++accepted;
    double diff2 = 0;
    for (int j = 0; j < N; ++j) {
      const double dv = value_at(a, j) - value_at(b, j);
      diff2 += dv * dv;
    }
    sup = std::max(sup, std::sqrt(diff2) / d);
  }
  return sup;
}

SuperlevelResult superlevel_measure(const Trajectory& traj,
                                    const Scenario& scenario, const Cylinder& cyl,
                                    double mu, double nu, double delta) {
  if (!(nu > 0 && nu < 1)) throw DomainError("nu must be in (0,1)");
  const Mesh& mesh = *traj.mesh;
  check_cylinder(cyl, traj);
  const double eps = scenario.params.eps;
  const double level = delta + (1 - nu) * mu;

  // a single state is treated as stationary over the cylinder interval
  const bool stationary = is_stationary(traj);
  SuperlevelResult res;
  double dt = cyl.rho * cyl.rho;
  if (!stationary) {
    // uniform slice weight from the stored step spacing
    dt = traj.states[1].time - traj.states[0].time;
  }
  for (size_t s = stationary ? 0 : 1; s < traj.states.size(); ++s) {
    const auto& state = traj.states[s];
    if (!slice_in_window(traj, cyl, state.time)) continue;
    GradientField grad = element_gradient(state);
    for (int e = 0; e < mesh.element_count(); ++e) {
      if (!cyl.contains(mesh.element_centroid(e),
                        stationary ? cyl.t0 : state.time, mesh.dim()))
        continue;
      const double vol = mesh.element_volume(e) * dt;
      res.cylinder_measure += vol;
      const double sigma = element_sigma(mesh, scenario.model, grad, e, state.time);
      if (std::sqrt(eps * eps + sigma) > level) res.measure += vol;
    }
  }
  if (res.cylinder_measure <= 0)
    throw CylinderOutOfDomain("no samples inside the cylinder");
  res.ratio = res.measure / res.cylinder_measure;
  return res;
}

void max_principle_check(const Trajectory& traj, const Scenario& scenario,
                         DiagnosticsReport& report) {
  const Mesh& mesh = *traj.mesh;
  const int N = scenario.params.N;
  const bool zero_forcing = scenario.forcing.descriptor == "zero";

  double sup_abs = 0;
  for (const auto& state : traj.states)
    for (double v : state.values) sup_abs = std::max(sup_abs, std::abs(v));
  report.add("max_principle.sup_abs_u", sup_abs);

  if (N != 1 || !zero_forcing) {
    // quantitative bound has implicit constants; report the data norms only
    std::vector<double> times;
    for (const auto& s : traj.states) times.push_back(s.time);
    report.add("max_principle.forcing_lqr",
               lq_lr_norm(scenario.forcing, mesh, times, scenario.params.q,
                          scenario.params.r));
    return;
  }

  // sharp form: parabolic boundary data = initial slice + lateral values
  double lo = kInf, hi = -kInf;
  for (int i = 0; i < mesh.node_count(); ++i) {
    const double v = traj.states.front().at(i, 0);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<double> bval(1);
  for (const auto& state : traj.states)
    for (int idx : mesh.boundary_nodes()) {
      scenario.boundary(mesh.node(idx), state.time, bval.data());
      lo = std::min(lo, bval[0]);
      hi = std::max(hi, bval[0]);
    }

  constexpr double kSlack = 1e-8;
  double worst = 0;
  for (const auto& state : traj.states)
    for (double v : state.values)
      worst = std::max({worst, lo - v, v - hi});
  report.add_checked("max_principle.range_excess", worst, kSlack, worst <= kSlack);

  bool decaying = true;
  double prev_sup = -kInf;
  for (size_t s = 0; s < traj.states.size(); ++s) {
    double sup = -kInf;
    for (double v : traj.states[s].values) sup = std::max(sup, v);
    if (s > 0 && sup > prev_sup + kSlack) decaying = false;
    prev_sup = sup;
  }
  report.add_checked("max_principle.sup_monotone_decay", decaying ? 1.0 : 0.0,
                     0.5, decaying);
}

// ---------------------------------------------------------------------------
// Studies
// ---------------------------------------------------------------------------

namespace {

void require_matched(const Scenario& a, const Scenario& b) {
  if (a.params.resolution != b.params.resolution || a.params.n != b.params.n ||
      a.params.N != b.params.N || a.box.lo != b.box.lo || a.box.hi != b.box.hi ||
      std::abs(a.params.tau - b.params.tau) > 0 ||
      std::abs(a.params.t_end - b.params.t_end) > 0)
    throw MismatchedDiscretization("runs differ in mesh or time step");
}

// space-time L^p distance of gradients, piecewise constant in time
double grad_lp_distance(const Trajectory& a, const Trajectory& b, double p_norm,
                        double tau) {
  const Mesh& mesh = *a.mesh;
  if (a.states.size() != b.states.size())
    throw MismatchedDiscretization("trajectories have different lengths");
  double acc = 0;
  for (size_t s = 1; s < a.states.size(); ++s) {
    GradientField ga = element_gradient(a.states[s]);
    GradientField gb = element_gradient(b.states[s]);
    for (int e = 0; e < mesh.element_count(); ++e) {
      Mat diff = ga.element(e) - gb.element(e);
      acc += mesh.element_volume(e) * tau * std::pow(diff.frobenius(), p_norm);
    }
  }
  return std::pow(acc, 1.0 / p_norm);
}

}  // namespace

EpsConvergenceTable eps_convergence_study(const Scenario& scenario,
                                          const SolverConfig& config,
                                          const std::vector<double>& eps_list) {
  if (eps_list.size() < 2)
    throw DomainError("eps study needs at least two entries");
  for (size_t k = 1; k < eps_list.size(); ++k)
    if (!(eps_list[k] < eps_list[k - 1]))
      throw DomainError("eps list must be strictly decreasing");

  SolverConfig cfg = config;
  cfg.checkpoint_stride = 1;  // the space-time norms need every slice
  std::vector<Trajectory> runs;
  runs.reserve(eps_list.size());
  for (double eps : eps_list) {
    Scenario sc = scenario;
    sc.params.eps = eps;
    require_matched(scenario, sc);
    runs.push_back(run(sc, cfg));
  }

  EpsConvergenceTable table;
  const double two_delta = 2 * scenario.params.delta;
  for (size_t k = 0; k + 1 < runs.size(); ++k) {
    EpsConvergenceRow row;
    row.eps_coarse = eps_list[k];
    row.eps_fine = eps_list[k + 1];
    row.grad_lp_diff = grad_lp_distance(runs[k], runs[k + 1], scenario.params.p,
                                        scenario.params.tau);

    // sup distance of the truncated gradients across all kept slices
    const Mesh& mesh = *runs[k].mesh;
    double sup = 0;
    Parameters pa = scenario.params, pb = scenario.params;
    pa.eps = eps_list[k];
    pb.eps = eps_list[k + 1];
    for (size_t s = 0; s < runs[k].states.size(); ++s) {
      GradientField ga = element_gradient(runs[k].states[s]);
      GradientField gb = element_gradient(runs[k + 1].states[s]);
      const double t = runs[k].states[s].time;
      for (int e = 0; e < mesh.element_count(); ++e) {
        const Coord c = mesh.element_centroid(e);
        Mat diff = trunc_gradient(scenario.model, pa, c, t, ga.element(e), two_delta) -
                   trunc_gradient(scenario.model, pb, c, t, gb.element(e), two_delta);
        sup = std::max(sup, diff.frobenius());
      }
    }
    row.trunc_sup_diff = sup;
    table.rows.push_back(row);
  }
  table.cauchy = true;
  for (size_t k = 1; k < table.rows.size(); ++k)
    if (table.rows[k].grad_lp_diff > table.rows[k - 1].grad_lp_diff)
      table.cauchy = false;
  return table;
}

StabilityResult stability_check(const Scenario& a, const Scenario& b,
                                const SolverConfig& config) {
  require_matched(a, b);
  SolverConfig cfg = config;
  cfg.checkpoint_stride = 1;
  Trajectory ta = run(a, cfg);
  Trajectory tb = run(b, cfg);
  const Mesh& mesh = *ta.mesh;
  const int N = a.params.N;

  StabilityResult res;
  std::vector<double> am(mesh.element_count());
  for (size_t s = 0; s < ta.states.size(); ++s) {
    // nodal interpolants sampled at centroids for the L2 slice norm
    for (int e = 0; e < mesh.element_count(); ++e) {
      double acc = 0;
      const int nv = mesh.dim() + 1;
      for (int j = 0; j < N; ++j) {
        double da = 0;
        for (int v = 0; v < nv; ++v) {
          const int node = mesh.element(e)[v];
          da += (ta.states[s].at(node, j) - tb.states[s].at(node, j)) / nv;
        }
        acc += da * da;
      }
      am[e] = std::sqrt(acc);
    }
    res.sup_l2_diff = std::max(res.sup_l2_diff, integrate(am, mesh, 2.0));
  }
  res.grad_lp_diff = grad_lp_distance(ta, tb, std::max(a.params.p, 1.0),
                                      a.params.tau);

  std::vector<double> times;
  for (const auto& s : ta.states) times.push_back(s.time);
  ForcingTerm fdiff;
  fdiff.components = N;
  fdiff.descriptor = "difference";
  fdiff.fn = [&a, &b, N](const Coord& x, double t, double* out) {
    std::vector<double> fa(N), fb(N);
    a.forcing.fn(x, t, fa.data());
    b.forcing.fn(x, t, fb.data());
    for (int j = 0; j < N; ++j) out[j] = fa[j] - fb[j];
  };
  res.forcing_l21_diff = lq_lr_norm(fdiff, mesh, times, 2.0, 1.0);

  std::vector<double> ba(N), bb(N);
  for (double t : times)
    for (int idx : mesh.boundary_nodes()) {
      a.boundary(mesh.node(idx), t, ba.data());
      b.boundary(mesh.node(idx), t, bb.data());
      for (int j = 0; j < N; ++j)
        res.boundary_sup_diff =
            std::max(res.boundary_sup_diff, std::abs(ba[j] - bb[j]));
    }
  return res;
}

std::vector<DeltaSweepRow> delta_sweep(const Trajectory& traj,
                                       const Scenario& scenario,
                                       const std::vector<double>& delta_list,
                                       const Cylinder& cyl) {
  if (delta_list.empty()) throw DomainError("delta sweep needs entries");
  const double eps = scenario.params.eps;
  for (double d : delta_list)
    if (!(d > 4 * eps))
      throw TruncationOrder("delta sweep requires delta > 4 eps");
  const Mesh& mesh = *traj.mesh;
  check_cylinder(cyl, traj);

  std::vector<DeltaSweepRow> rows;
  for (double delta : delta_list) {
    DeltaSweepRow row;
    row.delta = delta;
    row.bound = 2 * delta + eps;
    double sup = 0;
    for (const auto& state : traj.states) {
      if (!slice_in_window(traj, cyl, state.time)) continue;
      GradientField grad = element_gradient(state);
      const double t_eff = is_stationary(traj) ? cyl.t0 : state.time;
      for (int e = 0; e < mesh.element_count(); ++e) {
        const Coord c = mesh.element_centroid(e);
        if (!cyl.contains(c, t_eff, mesh.dim())) continue;
        Mat du = grad.element(e);
        Mat diff = trunc_gradient(scenario.model, scenario.params, c, state.time,
                                  du, 2 * delta) -
                   du;
        sup = std::max(sup, gamma_norm(scenario.model, c, state.time, diff));
      }
    }
    row.sup_distance = sup;
    row.within_bound = sup <= row.bound + 1e-12;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace onepflow
