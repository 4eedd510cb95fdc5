#pragma once

#include <optional>

#include "onepflow/solver.hpp"

namespace onepflow {

// ---------------------------------------------------------------------------
// Named diagnostic results with optional pass/fail thresholds, serializable
// to JSON and parseable back (round-trip identity).
// ---------------------------------------------------------------------------
struct ReportEntry {
  std::string key;
  double value = 0;
  std::optional<double> threshold;
  std::optional<bool> pass;
  std::string refs;
};

struct Provenance {
  uint64_t scenario_hash = 0;
  std::string mesh;   // box and resolution descriptor
  double eps = 0;
  double delta = 0;
  uint64_t seed = 0;
  std::string timestamp;  // the only field allowed to differ across reruns
};

struct DiagnosticsReport {
  std::vector<ReportEntry> entries;
  Provenance provenance;

  void add(std::string key, double value, std::string refs = "");
  void add_checked(std::string key, double value, double threshold, bool pass,
                   std::string refs = "");
  bool all_pass() const;

  std::string to_json() const;
  static DiagnosticsReport from_json(const std::string& text);
};

/// Space-time ball B_rho(x0) x (t0 - rho^2, t0].
struct Cylinder {
  Coord center = {0, 0};
  double t0 = 0;
  double rho = 0;

  bool contains(const Coord& x, double t, int dim) const;
  /// Checks containment in the trajectory's space-time domain and the
  /// two-cells-across minimum; throws CylinderOutOfDomain.
  void check_against(const Mesh& mesh, double t_lo, double t_hi) const;
};

// ---------------------------------------------------------------------------
// Pointwise quantities over computed trajectories.
// ---------------------------------------------------------------------------

/// max over elements x steps inside the cylinder of sqrt(eps^2+|Du|^2_gamma).
double sup_v_eps(const Trajectory& traj, const Scenario& scenario,
                 const Cylinder& cyl);

/// Total volume of elements whose gradient gamma-norm is below delta.
/// Throws TruncationOrder when delta <= eps.
double facet_measure(const VectorField& state, const Scenario& scenario,
                     double delta);

struct HolderOptions {
  double alpha = 0.5;
  int sample_count = 10000;
  uint64_t seed = 0;
  /// Minimum pair separation in the parabolic metric
  /// d((x,t),(y,s)) = max(|x-y|, sqrt|t-s|); 0 means 2 mesh cells.
  double min_separation = 0;
};

/// Sampled Hoelder quotient of the truncated gradient of Du over the
/// cylinder: max |G_2delta(Du)(x,t) - G_2delta(Du)(y,s)| / d^alpha on
/// element-centroid values. Deterministic for a fixed seed.
double holder_seminorm(const Trajectory& traj, const Scenario& scenario,
                       double delta, const Cylinder& cyl, const HolderOptions& opt);

/// Sampled (1, 1/2)-Hoelder quotient of the solution itself over the
/// cylinder: max |u(x,t) - u(y,s)| / d on interpolated values; alpha in the
/// options is ignored (the exponent pair is fixed).
double holder_u_seminorm(const Trajectory& traj, const Cylinder& cyl,
                         const HolderOptions& opt);

struct SuperlevelResult {
  double measure = 0;        // space-time measure of the super-level set
  double cylinder_measure = 0;
  double ratio = 0;          // measure / discrete cylinder measure
};

/// Measure of {(x,t) in Q_rho : v_eps - delta > (1-nu) mu}.
SuperlevelResult superlevel_measure(const Trajectory& traj, const Scenario& scenario,
                                    const Cylinder& cyl, double mu, double nu,
                                    double delta);

/// Scalar trajectories with zero forcing get the sharp containment check in
/// [min data, max data] (plus 1e-8 slack) and a sup-decay flag; everything
/// else is reported without a verdict.
void max_principle_check(const Trajectory& traj, const Scenario& scenario,
                         DiagnosticsReport& report);

// ---------------------------------------------------------------------------
// Studies across runs.
// ---------------------------------------------------------------------------

struct EpsConvergenceRow {
  double eps_coarse = 0;
  double eps_fine = 0;
  double grad_lp_diff = 0;       // space-time L^p distance of gradients
  double trunc_sup_diff = 0;     // sup distance of truncated gradients
};

struct EpsConvergenceTable {
  std::vector<EpsConvergenceRow> rows;
  bool cauchy = false;  // each difference at most the previous one
};

/// Runs the scenario once per entry of eps_list (strictly decreasing, >= 2
/// entries) on the same mesh and time step and compares consecutive runs.
EpsConvergenceTable eps_convergence_study(const Scenario& scenario,
                                          const SolverConfig& config,
                                          const std::vector<double>& eps_list);

struct StabilityResult {
  double sup_l2_diff = 0;        // sup over steps of the L2 distance
  double grad_lp_diff = 0;       // space-time L^p distance of gradients
  double forcing_l21_diff = 0;   // L^{2,1} distance of the forcing terms
  double boundary_sup_diff = 0;  // sup distance of boundary data over steps
};

/// Two scenarios sharing mesh and time step, differing only in data.
StabilityResult stability_check(const Scenario& a, const Scenario& b,
                                const SolverConfig& config);

struct DeltaSweepRow {
  double delta = 0;
  double sup_distance = 0;  // sup over the cylinder of |G_2delta(Du)-Du|_gamma
  double bound = 0;         // 2 delta + eps
  bool within_bound = false;
};

/// Truncation sweep: for each delta (all > 4 eps) the sup distance between
/// the truncated and plain gradients over the cylinder, checked against the
/// algebraic bound 2 delta + eps.
std::vector<DeltaSweepRow> delta_sweep(const Trajectory& traj,
                                       const Scenario& scenario,
                                       const std::vector<double>& delta_list,
                                       const Cylinder& cyl);

}  // namespace onepflow
