#pragma once

#include <functional>

#include "onepflow/grid.hpp"
#include "onepflow/model.hpp"

namespace onepflow {

enum class SolverMode { kKacanov, kNewtonAfterKacanov };

struct SolverConfig {
  double inner_tol = 1e-8;    // relative nonlinear residual target
  int max_inner = 200;        // inner iteration cap
  double linear_tol = 1e-10;  // CG relative tolerance
  double damping = 1.0;       // under-relaxation in (0,1]
  SolverMode mode = SolverMode::kKacanov;
  double steady_tol = 1e-7;   // ||u_next - u||_inf / tau threshold
  long max_steps = 200000;    // cap for steady-state marches
  int checkpoint_stride = 1;  // trajectory keeps every k-th state

  void validate() const;
};

// ---------------------------------------------------------------------------
// A complete problem instance: parameters, coefficients, forcing, initial and
// parabolic boundary data, and the mesh descriptor. Builders fill descriptor
// so identical inputs hash identically.
// ---------------------------------------------------------------------------
struct Scenario {
  Parameters params;
  CoefficientModel model;
  ForcingTerm forcing;
  Box box;
  std::function<void(const Coord&, double*)> initial;            // u0(x)
  std::function<void(const Coord&, double, double*)> boundary;   // u_star(x,t)
  std::string descriptor;

  uint64_t hash() const;
  /// Mesh for this scenario's box/resolution.
  std::shared_ptr<Mesh> make_mesh() const;
  /// Nodal initial field; checks that it matches the boundary rule at t = 0.
  VectorField initial_field(std::shared_ptr<const Mesh> mesh) const;
};

struct StepRecord {
  long step = 0;
  double t = 0;
  int inner_iters = 0;
  double residual = 0;
  double energy = 0;       // integral of the gradient energy density
  double sup_v_eps = 0;
  double descent_margin = 0;  // most positive increase of the step functional
};

struct Trajectory {
  std::shared_ptr<const Mesh> mesh;
  std::vector<VectorField> states;  // stride-thinned, always first and last
  std::vector<StepRecord> records;
  bool aborted = false;

  const VectorField& final_state() const { return states.back(); }
};

/// Per-state sink invoked as the march produces states (checkpoint flushing).
using StateSink = std::function<void(const VectorField&, const StepRecord&)>;

class ImplicitSolver {
 public:
  ImplicitSolver(const Scenario& scenario, const SolverConfig& config);

  /// One implicit step of length tau from `state`; lagged-diffusivity inner
  /// loop (optionally Newton-corrected) down to the nonlinear residual target.
  VectorField implicit_step(const VectorField& state, double tau,
                            StepRecord* record = nullptr);

  /// Time march over (0, t_end]; a trailing partial step covers a remainder.
  Trajectory run(const StateSink& sink = nullptr);

  /// Marches until the steady tolerance; StagnationFailure past max_steps.
  VectorField steady_state(StepRecord* last = nullptr);

  const Scenario& scenario() const { return scenario_; }
  std::shared_ptr<const Mesh> mesh() const { return mesh_; }

 private:
  double step_functional(const VectorField& u, const VectorField& prev,
                         double tau, double t_new,
                         const std::vector<double>& load) const;
  void boundary_rule(std::vector<double>& out, double t, int node) const;
  void fill_mu(const GradientField& grad, double t, std::vector<double>& mu) const;
  VectorField solve_frozen(const VectorField& prev, const VectorField& iterate,
                           double tau, double t_new,
                           const std::vector<double>& load, int* cg_iters);
  VectorField newton_correct(const VectorField& prev, VectorField iterate,
                             double tau, double t_new,
                             const std::vector<double>& load, double* residual);
  double nonlinear_residual(const VectorField& u, const VectorField& prev,
                            double tau, double t_new,
                            const std::vector<double>& load) const;

  Scenario scenario_;
  SolverConfig config_;
  std::shared_ptr<Mesh> mesh_;
  FrozenOperatorAssembler assembler_;
  std::vector<double> mass_;
  mutable CsrMatrix K_;  // frozen operator, refilled per inner iteration
};

/// Convenience wrappers mirroring the operation names.
VectorField implicit_step(const VectorField& state, const Scenario& scenario,
                          const SolverConfig& config, double tau);
Trajectory run(const Scenario& scenario, const SolverConfig& config,
               const StateSink& sink = nullptr);
VectorField steady_state(const Scenario& scenario, const SolverConfig& config);

// ---------------------------------------------------------------------------
// Conjugate gradients with incomplete-Cholesky preconditioning (Jacobi
// fallback when the factorization breaks down). Throws NonSPD on nonpositive
// curvature, ConvergenceFailure when the iteration cap is hit.
// ---------------------------------------------------------------------------
struct CgResult {
  int iterations = 0;
  double relative_residual = 0;
};
CgResult pcg_solve(const CsrMatrix& A, const std::vector<double>& b,
                   std::vector<double>& x, double rel_tol, int max_iter);

}  // namespace onepflow
