#include "onepflow/solver.hpp"

#include <algorithm>
#include <cstring>

#include "onepflow/flux.hpp"

namespace onepflow {

void SolverConfig::validate() const {
  if (!(inner_tol > 0) || !(linear_tol > 0) || !(steady_tol > 0))
    throw DomainError("solver tolerances must be positive");
  if (!(damping > 0 && damping <= 1)) throw DomainError("damping must be in (0,1]");
  if (max_inner < 1 || max_steps < 1) throw DomainError("iteration caps must be >= 1");
  if (checkpoint_stride < 1) throw DomainError("checkpoint stride must be >= 1");
}

// ---------------------------------------------------------------------------
// Preconditioned CG
// ---------------------------------------------------------------------------

namespace {

struct Ic0 {
  // lower-triangular factor over the lower pattern of A
  int n = 0;
  std::vector<int> row_ptr, col_idx;
  std::vector<double> vals;
  std::vector<double> diag;   // Jacobi fallback
  bool ok = false;

  void build(const CsrMatrix& A) {
    n = A.n;
    diag.assign(n, 1.0);
    row_ptr.assign(n + 1, 0);
    for (int i = 0; i < n; ++i) {
      for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
        if (A.col_idx[k] <= i) ++row_ptr[i + 1];
      row_ptr[i + 1] += row_ptr[i];
    }
    col_idx.resize(row_ptr[n]);
    vals.assign(row_ptr[n], 0.0);
    {
      std::vector<int> cur(row_ptr.begin(), row_ptr.end() - 1);
      for (int i = 0; i < n; ++i)
        for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
          if (A.col_idx[k] <= i) {
            col_idx[cur[i]] = A.col_idx[k];
            vals[cur[i]] = A.vals[k];
            ++cur[i];
          }
    }
    // position of the diagonal = last entry of each row (columns sorted)
    ok = true;
    std::vector<double> inv_diag(n, 0.0);
    for (int i = 0; i < n && ok; ++i) {
      const int end = row_ptr[i + 1] - 1;  // diagonal slot
      for (int k = row_ptr[i]; k <= end; ++k) {
        const int j = col_idx[k];
        double s = vals[k];
        // dot of rows i and j over columns < j
        int pi = row_ptr[i], pj = row_ptr[j];
        const int ei = row_ptr[i + 1] - 1, ej = row_ptr[j + 1] - 1;
        while (pi < ei && pj < ej) {
          if (col_idx[pi] == col_idx[pj] && col_idx[pi] < j) {
            s -= vals[pi] * vals[pj];
            ++pi;
            ++pj;
          } else if (col_idx[pi] < col_idx[pj]) {
            ++pi;
          } else {
            ++pj;
          }
        }
        if (j < i) {
          vals[k] = s * inv_diag[j];
        } else {
          if (!(s > 0)) {
            ok = false;
            break;
          }
          vals[k] = std::sqrt(s);
          inv_diag[i] = 1.0 / vals[k];
        }
      }
    }
    if (!ok) {
      for (int i = 0; i < n; ++i) {
        double d = 0;
        for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
          if (A.col_idx[k] == i) d = A.vals[k];
        diag[i] = d > 0 ? 1.0 / d : 1.0;
      }
    }
  }

  void apply(const std::vector<double>& r, std::vector<double>& z,
             std::vector<double>& work) const {
    if (!ok) {
      for (int i = 0; i < n; ++i) z[i] = diag[i] * r[i];
      return;
    }
    // forward solve L w = r
    for (int i = 0; i < n; ++i) {
      double s = r[i];
      const int end = row_ptr[i + 1] - 1;
      for (int k = row_ptr[i]; k < end; ++k) s -= vals[k] * work[col_idx[k]];
      work[i] = s / vals[end];
    }
    // backward solve L^T z = w
    for (int i = 0; i < n; ++i) z[i] = work[i];
    for (int i = n - 1; i >= 0; --i) {
      const int end = row_ptr[i + 1] - 1;
      z[i] /= vals[end];
      const double zi = z[i];
      for (int k = row_ptr[i]; k < end; ++k) z[col_idx[k]] -= vals[k] * zi;
    }
  }
};

}  // namespace

CgResult pcg_solve(const CsrMatrix& A, const std::vector<double>& b,
                   std::vector<double>& x, double rel_tol, int max_iter) {
  const int n = A.n;
  Ic0 prec;
  prec.build(A);
  std::vector<double> r(n), z(n), p(n), Ap(n), work(n);
  A.multiply(x.data(), r.data());
  double bnorm = 0;
  for (int i = 0; i < n; ++i) {
    r[i] = b[i] - r[i];
    bnorm += b[i] * b[i];
  }
  bnorm = std::sqrt(bnorm);
  const double target = rel_tol * std::max(bnorm, 1e-300);
  auto norm = [n](const std::vector<double>& v) {
    double s = 0;
    for (int i = 0; i < n; ++i) s += v[i] * v[i];
    return std::sqrt(s);
  };
  CgResult res;
  if (norm(r) <= target) return res;
  prec.apply(r, z, work);
  p = z;
  double rz = 0;
  for (int i = 0; i < n; ++i) rz += r[i] * z[i];
  for (int it = 1; it <= max_iter; ++it) {
    A.multiply(p.data(), Ap.data());
    double pAp = 0;
    for (int i = 0; i < n; ++i) pAp += p[i] * Ap[i];
    if (!(pAp > 0)) throw NonSPD("nonpositive curvature in CG");
    const double alpha = rz / pAp;
    for (int i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    res.iterations = it;
    res.relative_residual = norm(r) / std::max(bnorm, 1e-300);
    if (norm(r) <= target) return res;
    prec.apply(r, z, work);
    double rz_new = 0;
    for (int i = 0; i < n; ++i) rz_new += r[i] * z[i];
    const double beta = rz_new / rz;
    rz = rz_new;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  throw ConvergenceFailure("CG did not reach tolerance in " +
                           std::to_string(max_iter) + " iterations");
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

uint64_t Scenario::hash() const {
  uint64_t h = fnv1a(descriptor);
  h = fnv1a(model.descriptor, h);
  h = fnv1a(forcing.descriptor, h);
  h = fnv1a(model.g1.descriptor, h);
  h = fnv1a(model.gp.descriptor, h);
  const double nums[] = {params.p,     params.eps,   params.delta, params.q,
                         params.r,     params.beta0, params.tau,   params.t_end,
                         double(params.n), double(params.N),
                         double(params.resolution), box.lo[0], box.lo[1],
                         box.hi[0],    box.hi[1]};
  h = fnv1a(nums, sizeof nums, h);
  return h;
}

std::shared_ptr<Mesh> Scenario::make_mesh() const {
  return std::make_shared<Mesh>(build_mesh(box, params.resolution));
}

VectorField Scenario::initial_field(std::shared_ptr<const Mesh> mesh) const {
  VectorField u(mesh, params.N, 0.0);
  std::vector<double> val(params.N), bval(params.N);
  for (int i = 0; i < mesh->node_count(); ++i) {
    initial(mesh->node(i), val.data());
    for (int j = 0; j < params.N; ++j) u.at(i, j) = val[j];
    if (mesh->is_boundary(i)) {
      boundary(mesh->node(i), 0.0, bval.data());
      for (int j = 0; j < params.N; ++j)
        if (std::abs(val[j] - bval[j]) > 1e-10 * (1 + std::abs(bval[j])))
          throw DomainError("initial data disagrees with the boundary rule at t=0");
    }
  }
  u.check();
  return u;
}

// ---------------------------------------------------------------------------
// Implicit solver
// ---------------------------------------------------------------------------

ImplicitSolver::ImplicitSolver(const Scenario& scenario, const SolverConfig& config)
    : scenario_(scenario),
      config_(config),
      mesh_(scenario.make_mesh()),
      assembler_(*mesh_),
      mass_(lumped_mass(*mesh_)) {
  config_.validate();
  scenario_.params.validate_basic();
}

void ImplicitSolver::fill_mu(const GradientField& grad, double t,
                             std::vector<double>& mu) const {
  const Mesh& m = *mesh_;
  mu.resize(m.element_count());
  const double eps = scenario_.params.eps;
  for (int e = 0; e < m.element_count(); ++e) {
    const Coord c = m.element_centroid(e);
    GammaMat g = scenario_.model.gamma(c, t);
    g.n = m.dim();
    const double* blk = grad.block(e);
    double sigma = 0;
    for (int j = 0; j < grad.components; ++j)
      sigma += g.form(blk + j * m.dim(), blk + j * m.dim());
    mu[e] = scalar_diffusivity(scenario_.model, eps, c, t, sigma);
  }
}

namespace {

std::vector<double> assemble_load(const Mesh& mesh, const ForcingTerm& f,
                                  int N, double t) {
  std::vector<double> F(size_t(mesh.node_count()) * N, 0.0);
  std::vector<double> fx(N);
  const int nv = mesh.dim() + 1;
  for (int e = 0; e < mesh.element_count(); ++e) {
    f.fn(mesh.element_centroid(e), t, fx.data());
    const double w = mesh.element_volume(e) / nv;
    for (int v = 0; v < nv; ++v) {
      const int node = mesh.element(e)[v];
      for (int j = 0; j < N; ++j) F[size_t(node) * N + j] += w * fx[j];
    }
  }
  return F;
}

}  // namespace

double ImplicitSolver::step_functional(const VectorField& u, const VectorField& prev,
                                       double tau, double t_new,
                                       const std::vector<double>& load) const {
  const Mesh& m = *mesh_;
  const int N = u.components;
  GradientField grad = element_gradient(u);
  double J = 0;
  for (int e = 0; e < m.element_count(); ++e) {
    const Coord c = m.element_centroid(e);
    GammaMat g = scenario_.model.gamma(c, t_new);
    g.n = m.dim();
    const double* blk = grad.block(e);
    double sigma = 0;
    for (int j = 0; j < N; ++j)
      sigma += g.form(blk + j * m.dim(), blk + j * m.dim());
    J += m.element_volume(e) *
         energy_density_from_sigma(scenario_.model, scenario_.params.p,
                                   scenario_.params.eps, c, t_new, sigma);
  }
  for (int i = 0; i < m.node_count(); ++i)
    for (int j = 0; j < N; ++j) {
      const double d = u.at(i, j) - prev.at(i, j);
      J += 0.5 / tau * mass_[i] * d * d;
      J -= load[size_t(i) * N + j] * u.at(i, j);
    }
  return J;
}

double ImplicitSolver::nonlinear_residual(const VectorField& u,
                                          const VectorField& prev, double tau,
                                          double t_new,
                                          const std::vector<double>& load) const {
  const Mesh& m = *mesh_;
  const int N = u.components;
  GradientField grad = element_gradient(u);
  std::vector<double> mu;
  fill_mu(grad, t_new, mu);
  assembler_.fill(scenario_.model, mu, t_new, K_);

  std::vector<double> comp(m.node_count()), Ku(m.node_count());
  double rr = 0, scale = 0;
  for (int j = 0; j < N; ++j) {
    for (int i = 0; i < m.node_count(); ++i) comp[i] = u.at(i, j);
    K_.multiply(comp.data(), Ku.data());
    for (int i = 0; i < m.node_count(); ++i) {
      if (m.is_boundary(i)) continue;
      const double Fi = load[size_t(i) * N + j];
      const double mi = mass_[i] / tau;
      const double r = mi * (u.at(i, j) - prev.at(i, j)) + Ku[i] - Fi;
      rr += r * r;
      const double s = std::abs(Fi) + std::abs(mi * prev.at(i, j)) + std::abs(Ku[i]);
      scale += s * s;
    }
  }
  return std::sqrt(rr) / std::max(std::sqrt(scale), 1e-300);
}

VectorField ImplicitSolver::solve_frozen(const VectorField& prev,
                                         const VectorField& iterate, double tau,
                                         double t_new,
                                         const std::vector<double>& load,
                                         int* cg_iters) {
  const Mesh& m = *mesh_;
  const int N = prev.components;
  GradientField grad = element_gradient(iterate);
  std::vector<double> mu;
  fill_mu(grad, t_new, mu);
  assembler_.fill(scenario_.model, mu, t_new, K_);

  CsrMatrix A = K_;
  for (int i = 0; i < A.n; ++i)
    for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
      if (A.col_idx[k] == i) A.vals[k] += mass_[i] / tau;

  // per-component right-hand sides with symmetric Dirichlet elimination
  std::vector<double> bval(N);
  std::vector<std::vector<double>> b(N, std::vector<double>(m.node_count()));
  std::vector<std::vector<double>> gbc(N, std::vector<double>(m.node_count(), 0.0));
  for (int idx : m.boundary_nodes()) {
    boundary_rule(bval, t_new, idx);
    for (int j = 0; j < N; ++j) gbc[j][idx] = bval[j];
  }
  for (int j = 0; j < N; ++j) {
    for (int i = 0; i < m.node_count(); ++i)
      b[j][i] = mass_[i] / tau * prev.at(i, j) + load[size_t(i) * N + j];
    for (int idx : m.boundary_nodes()) {
      const double g = gbc[j][idx];
      if (g != 0.0)
        for (int k = A.row_ptr[idx]; k < A.row_ptr[idx + 1]; ++k) {
          const int col = A.col_idx[k];
          if (!m.is_boundary(col)) b[j][col] -= A.vals[k] * g;
        }
    }
    for (int idx : m.boundary_nodes()) b[j][idx] = gbc[j][idx];
  }
  for (int i = 0; i < A.n; ++i) {
    if (m.is_boundary(i)) {
      for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
        A.vals[k] = (A.col_idx[k] == i) ? 1.0 : 0.0;
    } else {
      for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
        if (m.is_boundary(A.col_idx[k])) A.vals[k] = 0.0;
    }
  }

  VectorField next(mesh_, N, t_new);
  std::vector<double> x(m.node_count());
  int iters = 0;
  for (int j = 0; j < N; ++j) {
    for (int i = 0; i < m.node_count(); ++i)
      x[i] = m.is_boundary(i) ? gbc[j][i] : iterate.at(i, j);
    CgResult cg = pcg_solve(A, b[j], x, config_.linear_tol, 20 * m.node_count() + 200);
    iters = std::max(iters, cg.iterations);
    for (int i = 0; i < m.node_count(); ++i) next.at(i, j) = x[i];
  }
  if (cg_iters) *cg_iters = iters;
  return next;
}

void ImplicitSolver::boundary_rule(std::vector<double>& out, double t,
                                   int node) const {
  scenario_.boundary(mesh_->node(node), t, out.data());
}

namespace {

// Expanded CSR over (node, component) DOFs from a scalar node pattern.
CsrMatrix expand_pattern(const CsrMatrix& scalar, int N) {
  if (N == 1) return scalar;
  CsrMatrix out;
  out.n = scalar.n * N;
  out.row_ptr.assign(out.n + 1, 0);
  for (int i = 0; i < scalar.n; ++i) {
    const int deg = scalar.row_ptr[i + 1] - scalar.row_ptr[i];
    for (int j = 0; j < N; ++j) out.row_ptr[i * N + j + 1] = deg * N;
  }
  for (int i = 0; i < out.n; ++i) out.row_ptr[i + 1] += out.row_ptr[i];
  out.col_idx.resize(out.row_ptr[out.n]);
  out.vals.assign(out.col_idx.size(), 0.0);
  for (int i = 0; i < scalar.n; ++i)
    for (int j = 0; j < N; ++j) {
      int cur = out.row_ptr[i * N + j];
      for (int k = scalar.row_ptr[i]; k < scalar.row_ptr[i + 1]; ++k)
        for (int l = 0; l < N; ++l) out.col_idx[cur++] = scalar.col_idx[k] * N + l;
    }
  return out;
}

int csr_slot(const CsrMatrix& A, int row, int col) {
  for (int k = A.row_ptr[row]; k < A.row_ptr[row + 1]; ++k)
    if (A.col_idx[k] == col) return k;
  throw DomainError("missing slot in sparse pattern");
}

}  // namespace

VectorField ImplicitSolver::newton_correct(const VectorField& prev,
                                           VectorField iterate, double tau,
                                           double t_new,
                                           const std::vector<double>& load,
                                           double* residual) {
  const Mesh& m = *mesh_;
  const int N = prev.components;
  const int dim = m.dim();
  const double eps = scenario_.params.eps;
  CsrMatrix J = expand_pattern(assembler_.pattern(), N);

  double res = nonlinear_residual(iterate, prev, tau, t_new, load);
  double Jfun = step_functional(iterate, prev, tau, t_new, load);

  for (int newton_it = 0; newton_it < config_.max_inner && res > config_.inner_tol;
       ++newton_it) {
    GradientField grad = element_gradient(iterate);
    std::fill(J.vals.begin(), J.vals.end(), 0.0);
    for (int e = 0; e < m.element_count(); ++e) {
      const Coord c = m.element_centroid(e);
      GammaMat g = scenario_.model.gamma(c, t_new);
      g.n = dim;
      const double* blk = grad.block(e);
      double sigma = 0;
      for (int j = 0; j < N; ++j)
        sigma += g.form(blk + j * dim, blk + j * dim);
      const double v2 = eps * eps + sigma;
      const double a1 = scenario_.model.a1(c, t_new);
      const double ap = scenario_.model.ap(c, t_new);
      const double ciso = a1 * scenario_.model.g1.value(v2) +
                          ap * scenario_.model.gp.value(v2);
      const double dr1 = 2.0 * (a1 * scenario_.model.g1.deriv(v2) +
                                ap * scenario_.model.gp.deriv(v2));
      // gamma-contracted gradient (gz)^j_a = gamma_ab (Du)^j_b
      std::vector<double> gz(size_t(N) * dim, 0.0);
      for (int j = 0; j < N; ++j)
        for (int a = 0; a < dim; ++a)
          for (int b = 0; b < dim; ++b)
            gz[j * dim + a] += g.m[a][b] * blk[j * dim + b];
      const int nv = dim + 1;
      const double w = m.element_volume(e);
      for (int va = 0; va < nv; ++va) {
        const Coord& ga = m.shape_gradient(e, va);
        const int na = m.element(e)[va];
        for (int vb = 0; vb < nv; ++vb) {
          const Coord& gb = m.shape_gradient(e, vb);
          const int nb = m.element(e)[vb];
          double iso = 0;
          for (int al = 0; al < dim; ++al)
            for (int be = 0; be < dim; ++be)
              iso += g.m[al][be] * ga[al] * gb[be];
          for (int i = 0; i < N; ++i) {
            double li = 0;
            for (int a = 0; a < dim; ++a) li += gz[i * dim + a] * ga[a];
            for (int j = 0; j < N; ++j) {
              double lj = 0;
              for (int a = 0; a < dim; ++a) lj += gz[j * dim + a] * gb[a];
              double val = dr1 * li * lj;
              if (i == j) val += ciso * iso;
              J.vals[csr_slot(J, na * N + i, nb * N + j)] += w * val;
            }
          }
        }
      }
    }
    for (int i = 0; i < m.node_count(); ++i)
      for (int j = 0; j < N; ++j)
        J.vals[csr_slot(J, i * N + j, i * N + j)] += mass_[i] / tau;

    // residual vector (zero on constrained DOFs)
    std::vector<double> mu;
    fill_mu(grad, t_new, mu);
    assembler_.fill(scenario_.model, mu, t_new, K_);
    std::vector<double> comp(m.node_count()), Ku(m.node_count());
    std::vector<double> r(size_t(m.node_count()) * N, 0.0);
    for (int j = 0; j < N; ++j) {
      for (int i = 0; i < m.node_count(); ++i) comp[i] = iterate.at(i, j);
      K_.multiply(comp.data(), Ku.data());
      for (int i = 0; i < m.node_count(); ++i)
        if (!m.is_boundary(i))
          r[size_t(i) * N + j] = mass_[i] / tau * (iterate.at(i, j) - prev.at(i, j)) +
                                 Ku[i] - load[size_t(i) * N + j];
    }
    // constrain boundary DOFs of the Jacobian
    for (int i = 0; i < m.node_count(); ++i) {
      const bool bi = m.is_boundary(i);
      for (int j = 0; j < N; ++j) {
        const int row = i * N + j;
        for (int k = J.row_ptr[row]; k < J.row_ptr[row + 1]; ++k) {
          const int cn = J.col_idx[k] / N;
          if (bi)
            J.vals[k] = (J.col_idx[k] == row) ? 1.0 : 0.0;
          else if (m.is_boundary(cn))
            J.vals[k] = 0.0;
        }
      }
    }

    std::vector<double> du(r.size(), 0.0), negr(r.size());
    for (size_t k = 0; k < r.size(); ++k) negr[k] = -r[k];
    pcg_solve(J, negr, du, config_.linear_tol, 20 * static_cast<int>(r.size()) + 200);

    // line search on the proximal functional; fall back to the lagged
    // iterate when no decrease can be found
    double s = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt) {
      VectorField trial = iterate;
      for (int i = 0; i < m.node_count(); ++i)
        for (int j = 0; j < N; ++j) trial.at(i, j) += s * du[size_t(i) * N + j];
      const double Jt = step_functional(trial, prev, tau, t_new, load);
      if (Jt <= Jfun + 1e-12 * (1 + std::abs(Jfun))) {
        iterate = std::move(trial);
        Jfun = Jt;
        accepted = true;
        break;
      }
      s *= 0.5;
    }
    if (!accepted) break;
    res = nonlinear_residual(iterate, prev, tau, t_new, load);
  }
  if (residual) *residual = res;
  return iterate;
}

VectorField ImplicitSolver::implicit_step(const VectorField& state, double tau,
                                          StepRecord* record) {
  if (state.values.size() !=
      size_t(mesh_->node_count()) * size_t(state.components))
    throw MismatchedDiscretization("state does not live on this solver's mesh");
  if (!(tau > 0)) throw DomainError("step length must be positive");
  const double t_new = state.time + tau;
  const int N = state.components;
  const std::vector<double> load =
      assemble_load(*mesh_, scenario_.forcing, N, t_new);

  VectorField it_state = state;
  it_state.time = t_new;
  // every inner iterate carries the end-of-step boundary values
  {
    std::vector<double> bval(N);
    for (int idx : mesh_->boundary_nodes()) {
      boundary_rule(bval, t_new, idx);
      for (int j = 0; j < N; ++j) it_state.at(idx, j) = bval[j];
    }
  }

  double J_prev = step_functional(it_state, state, tau, t_new, load);
  double descent_margin = -kInf;
  double res = kInf;
  // In the Newton-accelerated mode the lagged phase only warms up the iterate.
  const int lagged_cap = config_.mode == SolverMode::kNewtonAfterKacanov
                             ? std::min(config_.max_inner, 5)
                             : config_.max_inner;
  int inner = 0;
  for (inner = 1; inner <= lagged_cap; ++inner) {
    VectorField cand = solve_frozen(state, it_state, tau, t_new, load, nullptr);
    if (config_.damping < 1.0) {
      for (size_t k = 0; k < cand.values.size(); ++k)
        cand.values[k] = config_.damping * cand.values[k] +
                         (1 - config_.damping) * it_state.values[k];
    }
    double J_new = step_functional(cand, state, tau, t_new, load);
    // backtrack toward the previous iterate if the proximal functional rose;
    // the lagged surrogate is not a majorizer for fast-growing profiles
    const double rise_tol = 1e-10 * (1 + std::abs(J_prev));
    int backtracks = 0;
    while (J_new > J_prev + rise_tol && backtracks < 40) {
      for (size_t k = 0; k < cand.values.size(); ++k)
        cand.values[k] = 0.5 * (cand.values[k] + it_state.values[k]);
      J_new = step_functional(cand, state, tau, t_new, load);
      ++backtracks;
    }
    descent_margin = std::max(descent_margin, J_new - J_prev);
    it_state = std::move(cand);
    J_prev = J_new;
    res = nonlinear_residual(it_state, state, tau, t_new, load);
    if (res <= config_.inner_tol) break;
  }
  if (res > config_.inner_tol) {
    if (config_.mode != SolverMode::kNewtonAfterKacanov)
      throw ConvergenceFailure("inner iteration stalled at residual " +
                               std::to_string(res));
    it_state = newton_correct(state, std::move(it_state), tau, t_new, load, &res);
    if (res > config_.inner_tol)
      throw ConvergenceFailure("Newton correction stalled at residual " +
                               std::to_string(res));
  }

  if (record) {
    record->t = t_new;
    record->inner_iters = inner > lagged_cap ? lagged_cap : inner;
    record->residual = res;
    record->descent_margin = descent_margin;
    GradientField grad = element_gradient(it_state);
    double energy = 0, sup_v = 0;
    const double eps = scenario_.params.eps;
    for (int e = 0; e < mesh_->element_count(); ++e) {
      const Coord c = mesh_->element_centroid(e);
      GammaMat g = scenario_.model.gamma(c, t_new);
      g.n = mesh_->dim();
      const double* blk = grad.block(e);
      double sigma = 0;
      for (int j = 0; j < N; ++j)
        sigma += g.form(blk + j * mesh_->dim(), blk + j * mesh_->dim());
      energy += mesh_->element_volume(e) *
                energy_density_from_sigma(scenario_.model, scenario_.params.p, eps,
                                          c, t_new, sigma);
      sup_v = std::max(sup_v, std::sqrt(eps * eps + sigma));
    }
    record->energy = energy;
    record->sup_v_eps = sup_v;
  }
  return it_state;
}

Trajectory ImplicitSolver::run(const StateSink& sink) {
  const Parameters& pr = scenario_.params;
  Trajectory traj;
  traj.mesh = mesh_;
  VectorField u = scenario_.initial_field(mesh_);

  StepRecord rec0;
  rec0.step = 0;
  rec0.t = 0;
  {
    GradientField grad = element_gradient(u);
    double sup_v = 0, energy = 0;
    for (int e = 0; e < mesh_->element_count(); ++e) {
      const Coord c = mesh_->element_centroid(e);
      GammaMat g = scenario_.model.gamma(c, 0.0);
      g.n = mesh_->dim();
      const double* blk = grad.block(e);
      double sigma = 0;
      for (int j = 0; j < u.components; ++j)
        sigma += g.form(blk + j * mesh_->dim(), blk + j * mesh_->dim());
      sup_v = std::max(sup_v, std::sqrt(pr.eps * pr.eps + sigma));
      energy += mesh_->element_volume(e) *
                energy_density_from_sigma(scenario_.model, pr.p, pr.eps, c, 0.0,
                                          sigma);
    }
    rec0.sup_v_eps = sup_v;
    rec0.energy = energy;
  }
  traj.records.push_back(rec0);
  traj.states.push_back(u);
  if (sink) sink(u, rec0);

  const double tiny = 1e-12 * std::max(pr.tau, pr.t_end);
  long step = 0;
  double t = 0;
  try {
    while (t < pr.t_end - tiny) {
      double tau = std::min(pr.tau, pr.t_end - t);
      StepRecord rec;
      u = implicit_step(u, tau, &rec);
      t = u.time;
      rec.step = ++step;
      traj.records.push_back(rec);
      const bool keep = (step % config_.checkpoint_stride == 0) ||
                        (t >= pr.t_end - tiny);
      if (keep && std::abs(traj.states.back().time - t) > tiny) {
        traj.states.push_back(u);
        if (sink) sink(u, rec);
      }
    }
  } catch (const Error&) {
    traj.aborted = true;
    throw;
  }
  return traj;
}

VectorField ImplicitSolver::steady_state(StepRecord* last) {
  const Parameters& pr = scenario_.params;
  VectorField u = scenario_.initial_field(mesh_);
  for (long step = 1; step <= config_.max_steps; ++step) {
    StepRecord rec;
    VectorField next = implicit_step(u, pr.tau, &rec);
    rec.step = step;
    double diff = 0;
    for (size_t k = 0; k < u.values.size(); ++k)
      diff = std::max(diff, std::abs(next.values[k] - u.values[k]));
    u = std::move(next);
    if (last) *last = rec;
    if (diff / pr.tau <= config_.steady_tol) return u;
  }
  throw StagnationFailure("steady tolerance not reached within " +
                          std::to_string(config_.max_steps) + " steps");
}

VectorField implicit_step(const VectorField& state, const Scenario& scenario,
                          const SolverConfig& config, double tau) {
  ImplicitSolver solver(scenario, config);
  VectorField st = state;
  st.mesh = solver.mesh();
  return solver.implicit_step(st, tau);
}

Trajectory run(const Scenario& scenario, const SolverConfig& config,
               const StateSink& sink) {
  ImplicitSolver solver(scenario, config);
  return solver.run(sink);
}

VectorField steady_state(const Scenario& scenario, const SolverConfig& config) {
  ImplicitSolver solver(scenario, config);
  return solver.steady_state();
}

}  // namespace onepflow
