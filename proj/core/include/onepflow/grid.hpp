#pragma once

#include <iosfwd>
#include <memory>

#include "onepflow/types.hpp"

namespace onepflow {

struct CoefficientModel;

struct Box {
  Coord lo = {0, 0};
  Coord hi = {1, 1};
};

// ---------------------------------------------------------------------------
// Structured simplicial mesh of a box: segments in 1D, each cell split into
// two triangles in 2D. Piecewise-linear shape functions with constant
// per-element gradients; deterministic node and element ordering.
// ---------------------------------------------------------------------------
class Mesh {
 public:
  static constexpr int kMaxNodes = 1 << 22;

  int dim() const { return dim_; }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  int element_count() const { return static_cast<int>(elems_.size()); }
  const Box& box() const { return box_; }
  const std::array<int, 2>& resolution() const { return res_; }

  const Coord& node(int i) const { return nodes_[i]; }
  /// Vertex ids of an element; dim+1 entries are valid.
  const std::array<int, 3>& element(int e) const { return elems_[e]; }
  double element_volume(int e) const { return volumes_[e]; }
  Coord element_centroid(int e) const;
  /// Gradient of the local shape function of vertex v on element e.
  const Coord& shape_gradient(int e, int v) const { return grads_[e][v]; }

  bool is_boundary(int i) const { return boundary_[i] != 0; }
  const std::vector<int>& boundary_nodes() const { return boundary_list_; }

  double total_volume() const { return total_volume_; }
  /// Largest cell extent, the mesh scale h.
  double h() const { return h_; }
  /// Element containing x (clamped to the box). Deterministic tie-breaking.
  int locate(const Coord& x) const;

  friend Mesh build_mesh(const Box& box, int resolution);

 private:
  int dim_ = 2;
  Box box_;
  std::array<int, 2> res_ = {0, 0};
  std::vector<Coord> nodes_;
  std::vector<std::array<int, 3>> elems_;
  std::vector<double> volumes_;
  std::vector<std::array<Coord, 3>> grads_;
  std::vector<uint8_t> boundary_;
  std::vector<int> boundary_list_;
  double total_volume_ = 0;
  double h_ = 0;
};

/// Builds the mesh; the box decides the dimension (a degenerate second axis
/// is rejected). Throws SizeOverflow past kMaxNodes, DomainError for bad boxes.
Mesh build_mesh(const Box& box, int resolution);
Mesh build_mesh_1d(double lo, double hi, int resolution);

// ---------------------------------------------------------------------------
// Nodal vector field and per-element gradient field.
// ---------------------------------------------------------------------------
struct VectorField {
  std::shared_ptr<const Mesh> mesh;
  int components = 1;
  std::vector<double> values;  // node-major, component-minor
  double time = 0;

  VectorField() = default;
  VectorField(std::shared_ptr<const Mesh> m, int N, double t = 0)
      : mesh(std::move(m)), components(N),
        values(static_cast<size_t>(mesh->node_count()) * N, 0.0), time(t) {}

  double& at(int node, int j) { return values[size_t(node) * components + j]; }
  double at(int node, int j) const { return values[size_t(node) * components + j]; }
  void check() const;  // finite entries, consistent size
};

struct GradientField {
  std::shared_ptr<const Mesh> mesh;
  int components = 1;
  std::vector<double> values;  // element-major, row-major N-by-n blocks
  double time = 0;

  Mat element(int e) const;
  double* block(int e) {
    return values.data() + size_t(e) * components * mesh->dim();
  }
  const double* block(int e) const {
    return values.data() + size_t(e) * components * mesh->dim();
  }
};

/// Constant per-element gradients; exact for globally linear fields.
GradientField element_gradient(const VectorField& u);

/// Piecewise-linear evaluation of one component at a point (clamped to the
/// box).
double interpolate_value(const VectorField& u, const Coord& x, int component);

// ---------------------------------------------------------------------------
// Symmetric sparse operator in CSR form, one scalar block (components are
// decoupled and share the same matrix).
// ---------------------------------------------------------------------------
struct CsrMatrix {
  int n = 0;
  std::vector<int> row_ptr;
  std::vector<int> col_idx;
  std::vector<double> vals;

  void multiply(const double* x, double* y) const;
  double max_asymmetry() const;
};

/// Galerkin matrix of the frozen-coefficient form: per-element one-point
/// quadrature of gamma_ab(t) * mu_e * d_a u * d_b phi. Runs an SPD probe on a
/// boundary-constrained copy and throws NonSPD when it fails.
CsrMatrix assemble_frozen_operator(const Mesh& mesh, const CoefficientModel& model,
                                   const std::vector<double>& mu_field, double t);

/// Reusable assembler: the sparsity pattern and element scatter slots are
/// built once per mesh, refills are cheap.
class FrozenOperatorAssembler {
 public:
  explicit FrozenOperatorAssembler(const Mesh& mesh);
  /// Refills values in place; no SPD probe (the stepper's CG detects
  /// nonpositive curvature itself).
  void fill(const CoefficientModel& model, const std::vector<double>& mu_field,
            double t, CsrMatrix& out) const;
  const CsrMatrix& pattern() const { return pattern_; }

 private:
  const Mesh* mesh_;
  CsrMatrix pattern_;
  std::vector<std::array<int, 9>> slots_;
};

/// Lumped P1 mass vector: m_i = sum over incident elements of vol/(dim+1).
std::vector<double> lumped_mass(const Mesh& mesh);

/// Discrete L^s norm of per-element samples by centroid quadrature
/// (max |.| for s = inf).
double integrate(const std::vector<double>& element_samples, const Mesh& mesh,
                 double s);

// ---------------------------------------------------------------------------
// Checkpoint format: "OPF1" magic, u32 dim / components / resolution,
// f64 box extents and time, u64 node count, then node-major row-major values
// as little-endian 64-bit floats.
// ---------------------------------------------------------------------------
void write_checkpoint(std::ostream& os, const VectorField& u);
VectorField read_checkpoint(std::istream& is);
void write_field_csv(std::ostream& os, const VectorField& u);

}  // namespace onepflow
