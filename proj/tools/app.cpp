#include "app.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

namespace onepflow::cli {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Flat sectioned key-value parsing
// ---------------------------------------------------------------------------

struct RawConfig {
  // section -> key -> (value, line)
  std::map<std::string, std::map<std::string, std::pair<std::string, int>>> kv;
  std::set<std::string> consumed;  // "section.key"

  std::optional<std::string> get(const std::string& sec, const std::string& key) {
    auto s = kv.find(sec);
    if (s == kv.end()) return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    consumed.insert(sec + "." + key);
    return k->second.first;
  }

  void reject_unknown() const {
    for (const auto& [sec, keys] : kv)
      for (const auto& [key, val] : keys)
        if (!consumed.count(sec + "." + key))
          throw ParseError("unknown key '" + key + "' in [" + sec + "] at line " +
                           std::to_string(val.second));
  }
};

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

RawConfig read_raw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path);
  static const std::set<std::string> kSections = {
      "params", "coefficients", "forcing", "solver", "diagnostics"};
  RawConfig raw;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ParseError("malformed section header at line " + std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      if (!kSections.count(section))
        throw ParseError("unknown section [" + section + "] at line " +
                         std::to_string(lineno));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos || section.empty())
      throw ParseError("expected 'key = value' at line " + std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ParseError("empty key or value at line " + std::to_string(lineno));
    if (raw.kv[section].count(key))
      throw ParseError("duplicate key '" + key + "' at line " + std::to_string(lineno));
    raw.kv[section][key] = {val, lineno};
  }
  return raw;
}

double parse_double(const std::string& v, const std::string& where) {
  if (v == "inf" || v == "infinity") return kInf;
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ParseError("bad number '" + v + "' for " + where);
  }
}

long parse_int(const std::string& v, const std::string& where) {
  try {
    size_t pos = 0;
    long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ParseError("bad integer '" + v + "' for " + where);
  }
}

std::vector<double> parse_list(const std::string& v, const std::string& where) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(parse_double(trim(tok), where));
  return out;
}

// "name(arg1,arg2)" -> name + args
std::pair<std::string, std::vector<double>> parse_call(const std::string& v,
                                                       const std::string& where) {
  auto open = v.find('(');
  if (open == std::string::npos) return {v, {}};
  if (v.back() != ')') throw ParseError("malformed '" + v + "' for " + where);
  std::string name = trim(v.substr(0, open));
  std::string args = v.substr(open + 1, v.size() - open - 2);
  return {name, args.empty() ? std::vector<double>{} : parse_list(args, where)};
}

Profile load_table_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open profile table: " + path);
  std::vector<double> sigma, g;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ParseError("profile table " + path + ": expected 'sigma,value' at line " +
                       std::to_string(lineno));
    sigma.push_back(parse_double(trim(line.substr(0, comma)), "table sigma"));
    g.push_back(parse_double(trim(line.substr(comma + 1)), "table value"));
  }
  return Profile::table(std::move(sigma), std::move(g));
}

std::string fmt17(double v) {
  char buf[40];
  snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config assembly
// ---------------------------------------------------------------------------

Config parse_config(const std::string& path) {
  RawConfig raw = read_raw(path);
  Config cfg;

  auto preset = raw.get("params", "preset");
  if (!preset) throw ParseError("missing params.preset");
  cfg.preset = *preset;

  Parameters pr;
  auto opt_num = [&](const char* sec, const char* key, double& slot) {
    if (auto v = raw.get(sec, key)) slot = parse_double(*v, std::string(key));
  };
  auto opt_int = [&](const char* sec, const char* key, int& slot) {
    if (auto v = raw.get(sec, key)) slot = static_cast<int>(parse_int(*v, key));
  };
  opt_num("params", "p", pr.p);
  opt_num("params", "eps", pr.eps);
  opt_num("params", "delta", pr.delta);
  opt_num("params", "q", pr.q);
  opt_num("params", "r", pr.r);
  opt_num("params", "beta0", pr.beta0);
  opt_num("params", "tau", pr.tau);
  opt_num("params", "t_end", pr.t_end);
  opt_int("params", "n", pr.n);
  opt_int("params", "N", pr.N);
  opt_int("params", "resolution", pr.resolution);

  double constant_value = 0.0;
  opt_num("params", "constant_value", constant_value);

  // forcing rule (presets supply defaults; [forcing] overrides)
  std::optional<ForcingTerm> forcing;
  if (auto kind = raw.get("forcing", "kind")) {
    if (*kind == "zero") {
      forcing = ForcingTerm::zero(pr.N);
    } else if (*kind == "constant") {
      auto v = raw.get("forcing", "value");
      if (!v) throw ParseError("forcing.kind=constant needs forcing.value");
      std::vector<double> c(pr.N, parse_double(*v, "forcing.value"));
      forcing = ForcingTerm::constant(c);
    } else if (*kind == "step") {
      auto t0 = raw.get("forcing", "step_time");
      auto fb = raw.get("forcing", "step_before");
      auto fa = raw.get("forcing", "step_after");
      if (!t0 || !fb || !fa)
        throw ParseError("forcing.kind=step needs step_time, step_before, step_after");
      double st = parse_double(*t0, "step_time");
      double vb = parse_double(*fb, "step_before");
      double va = parse_double(*fa, "step_after");
      forcing = ForcingTerm::time_rule(
          [st, vb, va](double t) { return t < st ? vb : va; },
          "step(t0=" + fmt17(st) + "," + fmt17(vb) + "->" + fmt17(va) + ")");
    } else {
      throw ParseError("unknown forcing.kind '" + *kind + "'");
    }
  }

  // scenario from the preset
  if (cfg.preset == "radial-steady") {
    cfg.scenario = scenario_radial_steady(pr.p, pr.n, pr.resolution, pr.eps, pr.delta);
  } else if (cfg.preset == "bingham-pipe") {
    double c = 1.0;
    cfg.scenario = scenario_bingham_pipe([c](double) { return c; },
                                         "constant(" + fmt17(c) + ")",
                                         pr.resolution, pr.eps, pr.delta);
  } else if (cfg.preset == "constant") {
    cfg.scenario = scenario_constant(constant_value, pr.p, pr.resolution, pr.eps,
                                     pr.delta);
  } else {
    throw ParseError("unknown preset '" + cfg.preset +
                     "' (expected radial-steady, bingham-pipe or constant)");
  }
  // scalar knobs override the preset's defaults
  cfg.scenario.params.q = pr.q;
  cfg.scenario.params.r = pr.r;
  cfg.scenario.params.beta0 = pr.beta0;
  if (raw.consumed.count("params.tau") || raw.get("params", "tau"))
    cfg.scenario.params.tau = pr.tau;
  if (raw.consumed.count("params.t_end") || raw.get("params", "t_end"))
    cfg.scenario.params.t_end = pr.t_end;
  if (forcing) {
    if (forcing->components != cfg.scenario.params.N)
      throw ParseError("forcing component count mismatch");
    cfg.scenario.forcing = *forcing;
  }

  // coefficients
  double a1c = 1.0, apc = 1.0;
  opt_num("coefficients", "a1", a1c);
  opt_num("coefficients", "ap", apc);
  if (a1c != 1.0)
    cfg.scenario.model.a1 = [a1c](const Coord&, double) { return a1c; };
  if (apc != 1.0)
    cfg.scenario.model.ap = [apc](const Coord&, double) { return apc; };
  if (auto gk = raw.get("coefficients", "gamma")) {
    auto [name, args] = parse_call(*gk, "coefficients.gamma");
    auto& model = cfg.scenario.model;
    if (name == "identity-gamma") {
      model.gamma = CoefficientModel::identity_gamma();
      model.gamma0 = 1.0;
    } else if (name == "diag-gamma") {
      if (args.size() != 2) throw ParseError("diag-gamma needs two arguments");
      model.gamma = CoefficientModel::diag_gamma(args[0], args[1]);
      const double lo = std::min(args[0], args[1]);
      const double hi = std::max(args[0], args[1]);
      if (!(lo > 0)) throw ParseError("diag-gamma entries must be positive");
      model.gamma0 = std::min(lo, 1.0 / hi);
      model.Gamma0 = std::max(model.Gamma0, hi + a1c + apc);
    } else if (name == "rotating-gamma") {
      if (args.size() != 1) throw ParseError("rotating-gamma needs one argument");
      model.gamma = CoefficientModel::rotating_gamma(args[0]);
      model.gamma0 = 0.5;
      model.Gamma0 = std::max(model.Gamma0,
                              2.0 + a1c + apc + 1.5 * std::abs(args[0]));
    } else {
      throw ParseError("unknown gamma preset '" + name + "'");
    }
    model.descriptor = *gk;
  }
  if (auto prof = raw.get("coefficients", "profiles")) {
    if (*prof == "power") {
      // preset default
    } else if (*prof == "table") {
      auto g1p = raw.get("coefficients", "g1_table");
      auto gpp = raw.get("coefficients", "gp_table");
      if (!g1p || !gpp)
        throw ParseError("profiles=table needs g1_table and gp_table paths");
      cfg.scenario.model.g1 = load_table_profile(*g1p);
      cfg.scenario.model.gp = load_table_profile(*gpp);
    } else {
      throw ParseError("unknown profiles '" + *prof + "'");
    }
  }

  // solver block
  opt_num("solver", "inner_tol", cfg.solver.inner_tol);
  opt_num("solver", "linear_tol", cfg.solver.linear_tol);
  opt_num("solver", "damping", cfg.solver.damping);
  opt_num("solver", "steady_tol", cfg.solver.steady_tol);
  if (auto v = raw.get("solver", "max_inner"))
    cfg.solver.max_inner = static_cast<int>(parse_int(*v, "max_inner"));
  if (auto v = raw.get("solver", "max_steps"))
    cfg.solver.max_steps = parse_int(*v, "max_steps");
  if (auto v = raw.get("solver", "checkpoint_stride"))
    cfg.solver.checkpoint_stride = static_cast<int>(parse_int(*v, "checkpoint_stride"));
  if (auto v = raw.get("solver", "mode")) {
    if (*v == "kacanov")
      cfg.solver.mode = SolverMode::kKacanov;
    else if (*v == "newton-after-kacanov")
      cfg.solver.mode = SolverMode::kNewtonAfterKacanov;
    else
      throw ParseError("unknown solver.mode '" + *v + "'");
  }

  // diagnostics block
  if (auto v = raw.get("diagnostics", "seed"))
    cfg.plan.seed = static_cast<uint64_t>(parse_int(*v, "seed"));
  opt_num("diagnostics", "holder_alpha", cfg.plan.holder_alpha);
  if (auto v = raw.get("diagnostics", "holder_pairs"))
    cfg.plan.holder_pairs = static_cast<int>(parse_int(*v, "holder_pairs"));
  if (auto v = raw.get("diagnostics", "cylinder")) {
    auto nums = parse_list(*v, "diagnostics.cylinder");
    if (nums.size() != 4)
      throw ParseError("diagnostics.cylinder expects x0,y0,t0,rho");
    Cylinder cyl;
    cyl.center = {nums[0], nums[1]};
    cyl.t0 = nums[2];
    cyl.rho = nums[3];
    cfg.plan.cylinder = cyl;
  }
  if (auto v = raw.get("diagnostics", "eps_list"))
    cfg.plan.eps_list = parse_list(*v, "eps_list");
  if (auto v = raw.get("diagnostics", "delta_list"))
    cfg.plan.delta_list = parse_list(*v, "delta_list");
  opt_num("diagnostics", "superlevel_mu", cfg.plan.superlevel_mu);
  opt_num("diagnostics", "superlevel_nu", cfg.plan.superlevel_nu);
  if (auto v = raw.get("diagnostics", "run")) {
    std::stringstream ss(*v);
    std::string tok;
    while (std::getline(ss, tok, ',')) cfg.plan.run_list.push_back(trim(tok));
  }

  raw.reject_unknown();

  // validation: exponent window, then the structure sweep over the box
  validate_exponents(cfg.scenario.params);
  SamplingPlan plan;
  plan.seed = cfg.plan.seed;
  plan.box_lo = cfg.scenario.box.lo;
  plan.box_hi = cfg.scenario.box.hi;
  plan.t_hi = std::max(cfg.scenario.params.t_end, 1e-6);
  cfg.structure = validate_structure(cfg.scenario.model, cfg.scenario.params.p, plan);
  return cfg;
}

// ---------------------------------------------------------------------------
// Artifact helpers
// ---------------------------------------------------------------------------

namespace {

std::string mesh_descriptor(const Scenario& sc) {
  std::ostringstream os;
  os << "box[" << fmt17(sc.box.lo[0]) << "," << fmt17(sc.box.lo[1]) << ";"
     << fmt17(sc.box.hi[0]) << "," << fmt17(sc.box.hi[1]) << "]res"
     << sc.params.resolution << "n" << sc.params.n;
  return os.str();
}

Provenance make_provenance(const Config& cfg) {
  Provenance p;
  p.scenario_hash = cfg.scenario.hash();
  p.mesh = mesh_descriptor(cfg.scenario);
  p.eps = cfg.scenario.params.eps;
  p.delta = cfg.scenario.params.delta;
  p.seed = cfg.plan.seed;
  const auto now = std::chrono::system_clock::now();
  const auto tt = std::chrono::system_clock::to_time_t(now);
  char buf[64];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
  p.timestamp = buf;
  return p;
}

void write_provenance(const Config& cfg, const fs::path& dir) {
  DiagnosticsReport rep;
  rep.provenance = make_provenance(cfg);
  std::ofstream out(dir / "provenance.json", std::ios::binary);
  out << rep.to_json() << "\n";
}

void write_report(DiagnosticsReport& rep, const Config& cfg, const fs::path& dir) {
  rep.provenance = make_provenance(cfg);
  rep.provenance.timestamp.clear();  // timestamps live in provenance.json only
  std::ofstream out(dir / "diagnostics.json", std::ios::binary);
  out << rep.to_json() << "\n";
}

struct StepLog {
  std::ofstream out;
  explicit StepLog(const fs::path& p) : out(p, std::ios::binary) {
    out << "step,t,inner_iters,residual,energy,sup_v_eps\r\n";
  }
  void add(const StepRecord& r) {
    out << r.step << "," << fmt17(r.t) << "," << r.inner_iters << ","
        << fmt17(r.residual) << "," << fmt17(r.energy) << ","
        << fmt17(r.sup_v_eps) << "\r\n";
  }
};

void write_checkpoint_file(const VectorField& u, const fs::path& dir, long step) {
  char name[32];
  snprintf(name, sizeof name, "chk_%06ld.bin", step);
  std::ofstream out(dir / name, std::ios::binary);
  write_checkpoint(out, u);
}

Cylinder default_cylinder(const Scenario& sc) {
  Cylinder cyl;
  cyl.center = {0.5 * (sc.box.lo[0] + sc.box.hi[0]),
                0.5 * (sc.box.lo[1] + sc.box.hi[1])};
  cyl.t0 = sc.params.t_end;
  double ext = sc.box.hi[0] - sc.box.lo[0];
  if (sc.params.n == 2) ext = std::min(ext, sc.box.hi[1] - sc.box.lo[1]);
  cyl.rho = std::min(0.25 * ext, std::sqrt(sc.params.t_end));
  return cyl;
}

int exit_code_for(const DiagnosticsReport& rep) { return rep.all_pass() ? 0 : 2; }

}  // namespace

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_run(Config cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_provenance(cfg, dir);
  StepLog log(dir / "steplog.csv");

  ImplicitSolver solver(cfg.scenario, cfg.solver);
  Trajectory traj = solver.run([&](const VectorField& u, const StepRecord& rec) {
    log.add(rec);
    write_checkpoint_file(u, dir, rec.step);
  });
  {
    std::ofstream out(dir / "final.csv", std::ios::binary);
    write_field_csv(out, traj.final_state());
  }
  DiagnosticsReport rep;
  rep.add("run.steps", static_cast<double>(traj.records.size() - 1));
  rep.add("run.final_energy", traj.records.back().energy);
  rep.add("run.final_sup_v_eps", traj.records.back().sup_v_eps);
  write_report(rep, cfg, dir);
  return exit_code_for(rep);
}

int cmd_steady(Config cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_provenance(cfg, dir);

  ImplicitSolver solver(cfg.scenario, cfg.solver);
  StepRecord last;
  VectorField steady = solver.steady_state(&last);
  {
    std::ofstream out(dir / "steady.bin", std::ios::binary);
    write_checkpoint(out, steady);
  }
  {
    std::ofstream out(dir / "steady.csv", std::ios::binary);
    write_field_csv(out, steady);
  }

  DiagnosticsReport rep;
  rep.add("steady.steps", static_cast<double>(last.step));
  rep.add("steady.residual", last.residual);
  rep.add("steady.sup_v_eps", last.sup_v_eps);

  if (cfg.preset == "radial-steady") {
    const Mesh& mesh = *steady.mesh;
    std::ofstream out(dir / "radial_error.csv", std::ios::binary);
    out << "node,x,y,computed,exact,error\r\n";
    double linf = 0;
    for (int i = 0; i < mesh.node_count(); ++i) {
      const double exact =
          exact_radial(cfg.scenario.params.p, 2, mesh.node(i)).value;
      const double err = steady.at(i, 0) - exact;
      linf = std::max(linf, std::abs(err));
      out << i << "," << fmt17(mesh.node(i)[0]) << "," << fmt17(mesh.node(i)[1])
          << "," << fmt17(steady.at(i, 0)) << "," << fmt17(exact) << ","
          << fmt17(err) << "\r\n";
    }
    rep.add("steady.linf_error_vs_exact", linf);
    rep.add("steady.facet_measure",
            facet_measure(steady, cfg.scenario, cfg.scenario.params.delta));
  }
  write_report(rep, cfg, dir);
  return exit_code_for(rep);
}

int cmd_sweep(Config cfg, const std::string& kind, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_provenance(cfg, dir);
  DiagnosticsReport rep;

  if (kind == "eps") {
    if (cfg.plan.eps_list.size() < 2)
      throw DomainError("sweep eps needs diagnostics.eps_list with >= 2 entries");
    EpsConvergenceTable table =
        eps_convergence_study(cfg.scenario, cfg.solver, cfg.plan.eps_list);
    std::ofstream out(dir / "eps_sweep.csv", std::ios::binary);
    out << "eps_coarse,eps_fine,grad_lp_diff,trunc_sup_diff\r\n";
    for (const auto& row : table.rows)
      out << fmt17(row.eps_coarse) << "," << fmt17(row.eps_fine) << ","
          << fmt17(row.grad_lp_diff) << "," << fmt17(row.trunc_sup_diff) << "\r\n";
    rep.add_checked("eps_sweep.cauchy", table.cauchy ? 1.0 : 0.0, 0.5, table.cauchy);
    if (!table.rows.empty() && table.rows.front().grad_lp_diff > 0)
      rep.add("eps_sweep.last_over_first",
              table.rows.back().grad_lp_diff / table.rows.front().grad_lp_diff);
  } else if (kind == "delta") {
    if (cfg.plan.delta_list.empty())
      throw DomainError("sweep delta needs diagnostics.delta_list");
    SolverConfig cfgs = cfg.solver;
    cfgs.checkpoint_stride = 1;
    Trajectory traj = run(cfg.scenario, cfgs);
    Cylinder cyl = cfg.plan.cylinder.value_or(default_cylinder(cfg.scenario));
    auto rows = delta_sweep(traj, cfg.scenario, cfg.plan.delta_list, cyl);
    std::ofstream out(dir / "delta_sweep.csv", std::ios::binary);
    out << "delta,sup_distance,bound,within_bound\r\n";
    for (const auto& row : rows) {
      out << fmt17(row.delta) << "," << fmt17(row.sup_distance) << ","
          << fmt17(row.bound) << "," << (row.within_bound ? 1 : 0) << "\r\n";
      rep.add_checked("delta_sweep.within_bound@" + fmt17(row.delta),
                      row.sup_distance, row.bound, row.within_bound);
    }
  } else {
    throw DomainError("unknown sweep kind '" + kind + "' (expected eps or delta)");
  }
  write_report(rep, cfg, dir);
  return exit_code_for(rep);
}

int cmd_diagnose(Config cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_provenance(cfg, dir);

  SolverConfig cfgs = cfg.solver;
  cfgs.checkpoint_stride = 1;
  StepLog log(dir / "steplog.csv");
  Trajectory traj = run(cfg.scenario, cfgs,
                        [&](const VectorField&, const StepRecord& r) { log.add(r); });

  Cylinder cyl = cfg.plan.cylinder.value_or(default_cylinder(cfg.scenario));
  std::vector<std::string> what = cfg.plan.run_list;
  if (what.empty())
    what = {"sup_v", "facet", "max_principle"};

  DiagnosticsReport rep;
  for (const std::string& name : what) {
    if (name == "sup_v") {
      rep.add("sup_v_eps", sup_v_eps(traj, cfg.scenario, cyl));
    } else if (name == "facet") {
      rep.add("facet_measure",
              facet_measure(traj.final_state(), cfg.scenario,
                            cfg.scenario.params.delta));
    } else if (name == "holder") {
      HolderOptions opt;
      opt.alpha = cfg.plan.holder_alpha;
      opt.sample_count = cfg.plan.holder_pairs;
      opt.seed = cfg.plan.seed;
      std::string plan = "alpha=" + fmt17(opt.alpha) + ",pairs=" +
                         std::to_string(opt.sample_count) + ",seed=" +
                         std::to_string(opt.seed) + ",min_sep=2h";
      rep.entries.push_back({"holder_seminorm",
                             holder_seminorm(traj, cfg.scenario,
                                             cfg.scenario.params.delta, cyl, opt),
                             std::nullopt, std::nullopt, plan});
    } else if (name == "holder_u") {
      HolderOptions opt;
      opt.sample_count = cfg.plan.holder_pairs;
      opt.seed = cfg.plan.seed;
      std::string plan = "pairs=" + std::to_string(opt.sample_count) + ",seed=" +
                         std::to_string(opt.seed) + ",min_sep=2h";
      rep.entries.push_back({"holder_u_seminorm", holder_u_seminorm(traj, cyl, opt),
                             std::nullopt, std::nullopt, plan});
    } else if (name == "max_principle") {
      max_principle_check(traj, cfg.scenario, rep);
    } else if (name == "superlevel") {
      auto res = superlevel_measure(traj, cfg.scenario, cyl, cfg.plan.superlevel_mu,
                                    cfg.plan.superlevel_nu,
                                    cfg.scenario.params.delta);
      rep.add("superlevel.measure", res.measure);
      rep.add("superlevel.ratio", res.ratio);
    } else if (name == "delta_sweep") {
      if (cfg.plan.delta_list.empty())
        throw DomainError("delta_sweep diagnostic needs diagnostics.delta_list");
      for (const auto& row :
           delta_sweep(traj, cfg.scenario, cfg.plan.delta_list, cyl))
        rep.add_checked("delta_sweep.within_bound@" + fmt17(row.delta),
                        row.sup_distance, row.bound, row.within_bound);
    } else {
      throw DomainError("unknown diagnostic '" + name + "'");
    }
  }
  write_report(rep, cfg, dir);
  return exit_code_for(rep);
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

int main_entry(int argc, const char* const* argv) {
  CLI::App app{"solver and verification suite for regularized very singular "
               "diffusion with a facet"};
  app.require_subcommand(1);

  std::string config_path, out_dir, sweep_kind;
  long long seed_override = -1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file")->required();
    cmd->add_option("--out", out_dir, "output directory")->required();
    cmd->add_option("--seed", seed_override, "override diagnostics seed");
  };
  CLI::App* c_run = app.add_subcommand("run", "time march over (0, t_end]");
  CLI::App* c_steady = app.add_subcommand("steady", "march to the steady state");
  CLI::App* c_sweep = app.add_subcommand("sweep", "parameter sweep studies");
  c_sweep->add_option("kind", sweep_kind, "eps or delta")->required();
  CLI::App* c_diag = app.add_subcommand("diagnose", "run diagnostics on a trajectory");
  for (CLI::App* c : {c_run, c_steady, c_sweep, c_diag}) add_common(c);

  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    Config cfg = parse_config(config_path);
    if (seed_override >= 0) cfg.plan.seed = static_cast<uint64_t>(seed_override);
    if (c_run->parsed()) return cmd_run(std::move(cfg), out_dir);
    if (c_steady->parsed()) return cmd_steady(std::move(cfg), out_dir);
    if (c_sweep->parsed()) return cmd_sweep(std::move(cfg), sweep_kind, out_dir);
    if (c_diag->parsed()) return cmd_diagnose(std::move(cfg), out_dir);
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace onepflow::cli
