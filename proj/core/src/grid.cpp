#include "onepflow/grid.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>

#include "onepflow/model.hpp"

namespace onepflow {

// ---------------------------------------------------------------------------
// Mesh construction
// ---------------------------------------------------------------------------

Coord Mesh::element_centroid(int e) const {
  const auto& el = elems_[e];
  Coord c = {0, 0};
  const int nv = dim_ + 1;
  for (int v = 0; v < nv; ++v) {
    c[0] += nodes_[el[v]][0];
    c[1] += nodes_[el[v]][1];
  }
  c[0] /= nv;
  c[1] /= nv;
  return c;
}

int Mesh::locate(const Coord& x) const {
  const double ex = box_.hi[0] - box_.lo[0];
  double sx = (x[0] - box_.lo[0]) / ex * res_[0];
  int ix = std::clamp(static_cast<int>(sx), 0, res_[0] - 1);
  if (dim_ == 1) return ix;
  const double ey = box_.hi[1] - box_.lo[1];
  double sy = (x[1] - box_.lo[1]) / ey * res_[1];
  int iy = std::clamp(static_cast<int>(sy), 0, res_[1] - 1);
  // lower triangle if the local coordinates fall below the cell diagonal
  double fx = sx - ix, fy = sy - iy;
  int cell = 2 * (iy * res_[0] + ix);
  return (fx + fy <= 1.0) ? cell : cell + 1;
}

Mesh build_mesh_1d(double lo, double hi, int resolution) {
  Box b;
  b.lo = {lo, 0};
  b.hi = {hi, 0};
  return build_mesh(b, resolution);
}

Mesh build_mesh(const Box& box, int resolution) {
  if (resolution < 2) throw DomainError("resolution >= 2 per axis required");
  const double ex = box.hi[0] - box.lo[0];
  const double ey = box.hi[1] - box.lo[1];
  if (!(ex > 0)) throw DomainError("degenerate box: zero extent on axis 0");
  const int dim = (ey > 0) ? 2 : 1;
  if (dim == 2 && !(ey > 0)) throw DomainError("degenerate box on axis 1");

  Mesh m;
  m.dim_ = dim;
  m.box_ = box;
  m.res_ = {resolution, dim == 2 ? resolution : 0};

  const long nodes_estimate =
      dim == 1 ? (resolution + 1L) : (resolution + 1L) * (resolution + 1L);
  if (nodes_estimate > Mesh::kMaxNodes)
    throw SizeOverflow("mesh would have " + std::to_string(nodes_estimate) +
                       " nodes (cap " + std::to_string(Mesh::kMaxNodes) + ")");

  if (dim == 1) {
    const double h = ex / resolution;
    m.h_ = h;
    for (int i = 0; i <= resolution; ++i)
      m.nodes_.push_back({box.lo[0] + i * h, 0.0});
    m.boundary_.assign(m.nodes_.size(), 0);
    m.boundary_[0] = m.boundary_[resolution] = 1;
    for (int e = 0; e < resolution; ++e) {
      m.elems_.push_back({e, e + 1, -1});
      m.volumes_.push_back(h);
      std::array<Coord, 3> g{};
      g[0] = {-1.0 / h, 0.0};
      g[1] = {1.0 / h, 0.0};
      m.grads_.push_back(g);
    }
  } else {
    const double hx = ex / resolution, hy = ey / resolution;
    m.h_ = std::max(hx, hy);
    for (int iy = 0; iy <= resolution; ++iy)
      for (int ix = 0; ix <= resolution; ++ix)
        m.nodes_.push_back({box.lo[0] + ix * hx, box.lo[1] + iy * hy});
    m.boundary_.assign(m.nodes_.size(), 0);
    for (int iy = 0; iy <= resolution; ++iy)
      for (int ix = 0; ix <= resolution; ++ix)
        if (ix == 0 || iy == 0 || ix == resolution || iy == resolution)
          m.boundary_[iy * (resolution + 1) + ix] = 1;

    auto nid = [resolution](int ix, int iy) {
      return iy * (resolution + 1) + ix;
    };
    const double area = 0.5 * hx * hy;
    for (int iy = 0; iy < resolution; ++iy) {
      for (int ix = 0; ix < resolution; ++ix) {
        int v00 = nid(ix, iy), v10 = nid(ix + 1, iy);
        int v01 = nid(ix, iy + 1), v11 = nid(ix + 1, iy + 1);
        // lower triangle (v00, v10, v01), upper triangle (v11, v01, v10)
        m.elems_.push_back({v00, v10, v01});
        m.volumes_.push_back(area);
        {
          std::array<Coord, 3> g{};
          g[0] = {-1.0 / hx, -1.0 / hy};
          g[1] = {1.0 / hx, 0.0};
          g[2] = {0.0, 1.0 / hy};
          m.grads_.push_back(g);
        }
        m.elems_.push_back({v11, v01, v10});
        m.volumes_.push_back(area);
        {
          std::array<Coord, 3> g{};
          g[0] = {1.0 / hx, 1.0 / hy};
          g[1] = {-1.0 / hx, 0.0};
          g[2] = {0.0, -1.0 / hy};
          m.grads_.push_back(g);
        }
      }
    }
  }

  for (size_t i = 0; i < m.boundary_.size(); ++i)
    if (m.boundary_[i]) m.boundary_list_.push_back(static_cast<int>(i));
  for (double v : m.volumes_) m.total_volume_ += v;
  return m;
}

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

void VectorField::check() const {
  if (!mesh) throw DomainError("field has no mesh");
  if (values.size() != size_t(mesh->node_count()) * components)
    throw DomainError("field size mismatch");
  for (double v : values)
    if (!std::isfinite(v)) throw DomainError("non-finite field entry");
}

Mat GradientField::element(int e) const {
  const int n = mesh->dim();
  Mat g(components, n);
  const double* b = block(e);
  for (int j = 0; j < components; ++j)
    for (int a = 0; a < n; ++a) g(j, a) = b[j * n + a];
  return g;
}

GradientField element_gradient(const VectorField& u) {
  const Mesh& m = *u.mesh;
  const int n = m.dim(), N = u.components, nv = n + 1;
  GradientField g;
  g.mesh = u.mesh;
  g.components = N;
  g.time = u.time;
  g.values.assign(size_t(m.element_count()) * N * n, 0.0);
  for (int e = 0; e < m.element_count(); ++e) {
    const auto& el = m.element(e);
    double* blk = g.block(e);
    for (int v = 0; v < nv; ++v) {
      const Coord& sg = m.shape_gradient(e, v);
      for (int j = 0; j < N; ++j) {
        const double uv = u.at(el[v], j);
        for (int a = 0; a < n; ++a) blk[j * n + a] += uv * sg[a];
      }
    }
  }
  return g;
}

double interpolate_value(const VectorField& u, const Coord& x, int component) {
  const Mesh& m = *u.mesh;
  const int e = m.locate(x);
  const auto& el = m.element(e);
  if (m.dim() == 1) {
    const double xa = m.node(el[0])[0], xb = m.node(el[1])[0];
    const double w = std::clamp((x[0] - xa) / (xb - xa), 0.0, 1.0);
    return (1 - w) * u.at(el[0], component) + w * u.at(el[1], component);
  }
  const Coord& a = m.node(el[0]);
  const Coord& b = m.node(el[1]);
  const Coord& c = m.node(el[2]);
  const double det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
  const double l1 =
      ((b[0] - x[0]) * (c[1] - x[1]) - (c[0] - x[0]) * (b[1] - x[1])) / det;
  const double l2 =
      ((c[0] - x[0]) * (a[1] - x[1]) - (a[0] - x[0]) * (c[1] - x[1])) / det;
  const double l3 = 1.0 - l1 - l2;
  return l1 * u.at(el[0], component) + l2 * u.at(el[1], component) +
         l3 * u.at(el[2], component);
}

// ---------------------------------------------------------------------------
// Sparse operator
// ---------------------------------------------------------------------------

void CsrMatrix::multiply(const double* x, double* y) const {
  for (int i = 0; i < n; ++i) {
    double s = 0;
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += vals[k] * x[col_idx[k]];
    y[i] = s;
  }
}

double CsrMatrix::max_asymmetry() const {
  double worst = 0;
  for (int i = 0; i < n; ++i) {
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
      int j = col_idx[k];
      double aji = 0;
      for (int l = row_ptr[j]; l < row_ptr[j + 1]; ++l)
        if (col_idx[l] == i) {
          aji = vals[l];
          break;
        }
      worst = std::max(worst, std::abs(vals[k] - aji));
    }
  }
  return worst;
}

FrozenOperatorAssembler::FrozenOperatorAssembler(const Mesh& mesh) : mesh_(&mesh) {
  const int n = mesh.node_count();
  const int nv = mesh.dim() + 1;
  std::vector<std::vector<int>> adj(n);
  for (int e = 0; e < mesh.element_count(); ++e) {
    const auto& el = mesh.element(e);
    for (int a = 0; a < nv; ++a)
      for (int b = 0; b < nv; ++b) adj[el[a]].push_back(el[b]);
  }
  pattern_.n = n;
  pattern_.row_ptr.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) {
    auto& row = adj[i];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    pattern_.row_ptr[i + 1] = pattern_.row_ptr[i] + static_cast<int>(row.size());
  }
  pattern_.col_idx.reserve(pattern_.row_ptr[n]);
  for (int i = 0; i < n; ++i)
    for (int j : adj[i]) pattern_.col_idx.push_back(j);
  pattern_.vals.assign(pattern_.col_idx.size(), 0.0);

  auto slot = [this](int i, int j) {
    for (int k = pattern_.row_ptr[i]; k < pattern_.row_ptr[i + 1]; ++k)
      if (pattern_.col_idx[k] == j) return k;
    return -1;
  };
  slots_.resize(mesh.element_count());
  for (int e = 0; e < mesh.element_count(); ++e) {
    const auto& el = mesh.element(e);
    auto& sl = slots_[e];
    sl.fill(-1);
    for (int a = 0; a < nv; ++a)
      for (int b = 0; b < nv; ++b) sl[a * 3 + b] = slot(el[a], el[b]);
  }
}

void FrozenOperatorAssembler::fill(const CoefficientModel& model,
                                   const std::vector<double>& mu_field, double t,
                                   CsrMatrix& out) const {
  const Mesh& mesh = *mesh_;
  const int nv = mesh.dim() + 1;
  if (mu_field.size() != size_t(mesh.element_count()))
    throw DomainError("mu_field size mismatch");
  if (out.col_idx.size() != pattern_.col_idx.size()) out = pattern_;
  std::fill(out.vals.begin(), out.vals.end(), 0.0);
  for (int e = 0; e < mesh.element_count(); ++e) {
    const double mu = mu_field[e];
    if (!(mu > 0)) throw DomainError("nonpositive diffusivity on element " +
                                     std::to_string(e));
    GammaMat g = model.gamma(mesh.element_centroid(e), t);
    g.n = mesh.dim();
    const double w = mesh.element_volume(e) * mu;
    const auto& sl = slots_[e];
    for (int a = 0; a < nv; ++a) {
      const Coord& ga = mesh.shape_gradient(e, a);
      for (int b = 0; b < nv; ++b) {
        const Coord& gb = mesh.shape_gradient(e, b);
        double k = 0;
        for (int al = 0; al < g.n; ++al)
          for (int be = 0; be < g.n; ++be) k += g.m[al][be] * ga[al] * gb[be];
        out.vals[sl[a * 3 + b]] += w * k;
      }
    }
  }
}

namespace {

// SPD probe on a boundary-constrained copy: a nonpositive or vanishing
// interior diagonal, or nonpositive curvature along a few seeded directions,
// signals invalid mu or gamma.
void spd_probe(const Mesh& mesh, CsrMatrix K) {
  constexpr double kFloor = 1e-20;
  for (int i = 0; i < K.n; ++i) {
    if (mesh.is_boundary(i)) {
      for (int k = K.row_ptr[i]; k < K.row_ptr[i + 1]; ++k)
        K.vals[k] = (K.col_idx[k] == i) ? 1.0 : 0.0;
    } else {
      for (int k = K.row_ptr[i]; k < K.row_ptr[i + 1]; ++k)
        if (mesh.is_boundary(K.col_idx[k])) K.vals[k] = 0.0;
    }
  }
  double diag_scale = 0;
  for (int i = 0; i < K.n; ++i) {
    if (mesh.is_boundary(i)) continue;
    double d = 0;
    for (int k = K.row_ptr[i]; k < K.row_ptr[i + 1]; ++k)
      if (K.col_idx[k] == i) d = K.vals[k];
    if (!(d > kFloor))
      throw NonSPD("constrained diagonal " + std::to_string(i) +
                   " below floor: " + std::to_string(d));
    diag_scale = std::max(diag_scale, d);
  }
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::vector<double> v(K.n), Kv(K.n);
  for (int probe = 0; probe < 4; ++probe) {
    double vv = 0;
    for (int i = 0; i < K.n; ++i) {
      v[i] = mesh.is_boundary(i) ? 0.0 : uni(rng);
      vv += v[i] * v[i];
    }
    K.multiply(v.data(), Kv.data());
    double curv = 0;
    for (int i = 0; i < K.n; ++i) curv += v[i] * Kv[i];
    if (!(curv > -1e-12 * diag_scale * vv))
      throw NonSPD("nonpositive curvature in probe direction");
  }
}

}  // namespace

CsrMatrix assemble_frozen_operator(const Mesh& mesh, const CoefficientModel& model,
                                   const std::vector<double>& mu_field, double t) {
  FrozenOperatorAssembler asmb(mesh);
  CsrMatrix K;
  asmb.fill(model, mu_field, t, K);
  spd_probe(mesh, K);
  return K;
}

std::vector<double> lumped_mass(const Mesh& mesh) {
  std::vector<double> m(mesh.node_count(), 0.0);
  const int nv = mesh.dim() + 1;
  for (int e = 0; e < mesh.element_count(); ++e) {
    const double w = mesh.element_volume(e) / nv;
    for (int v = 0; v < nv; ++v) m[mesh.element(e)[v]] += w;
  }
  return m;
}

double integrate(const std::vector<double>& element_samples, const Mesh& mesh,
                 double s) {
  if (element_samples.size() != size_t(mesh.element_count()))
    throw DomainError("per-element sample count mismatch");
  if (!(s >= 1.0)) throw DomainError("exponent s >= 1 required");
  if (!std::isfinite(s)) {
    double sup = 0;
    for (double v : element_samples) sup = std::max(sup, std::abs(v));
    return sup;
  }
  double acc = 0;
  for (int e = 0; e < mesh.element_count(); ++e)
    acc += mesh.element_volume(e) * std::pow(std::abs(element_samples[e]), s);
  return std::pow(acc, 1.0 / s);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ParseError("truncated checkpoint");
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& os, const VectorField& u) {
  u.check();
  const Mesh& m = *u.mesh;
  os.write("OPF1", 4);
  put<uint32_t>(os, m.dim());
  put<uint32_t>(os, u.components);
  put<uint32_t>(os, m.resolution()[0]);
  put<uint32_t>(os, m.dim() == 2 ? m.resolution()[1] : 0);
  put<double>(os, m.box().lo[0]);
  put<double>(os, m.box().hi[0]);
  put<double>(os, m.box().lo[1]);
  put<double>(os, m.box().hi[1]);
  put<double>(os, u.time);
  put<uint64_t>(os, u.values.size() / u.components);
  for (double v : u.values) put<double>(os, v);
}

VectorField read_checkpoint(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "OPF1", 4) != 0)
    throw ParseError("bad checkpoint magic");
  const auto dim = get<uint32_t>(is);
  const auto N = get<uint32_t>(is);
  const auto res0 = get<uint32_t>(is);
  get<uint32_t>(is);  // second-axis resolution, implied by res0 here
  Box box;
  box.lo[0] = get<double>(is);
  box.hi[0] = get<double>(is);
  box.lo[1] = get<double>(is);
  box.hi[1] = get<double>(is);
  const double time = get<double>(is);
  const auto nodes = get<uint64_t>(is);
  if (dim == 1) box.lo[1] = box.hi[1] = 0;

  auto mesh = std::make_shared<Mesh>(build_mesh(box, static_cast<int>(res0)));
  if (uint64_t(mesh->node_count()) != nodes)
    throw ParseError("checkpoint node count mismatch");
  VectorField u(mesh, static_cast<int>(N), time);
  for (double& v : u.values) v = get<double>(is);
  return u;
}

void write_field_csv(std::ostream& os, const VectorField& u) {
  const Mesh& m = *u.mesh;
  os << "node,x,y";
  for (int j = 0; j < u.components; ++j) os << ",u" << j;
  os << "\r\n";
  char buf[64];
  for (int i = 0; i < m.node_count(); ++i) {
    os << i;
    snprintf(buf, sizeof buf, ",%.17g,%.17g", m.node(i)[0], m.node(i)[1]);
    os << buf;
    for (int j = 0; j < u.components; ++j) {
      snprintf(buf, sizeof buf, ",%.17g", u.at(i, j));
      os << buf;
    }
    os << "\r\n";
  }
}

}  // namespace onepflow
