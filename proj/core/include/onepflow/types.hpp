#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace onepflow {

/// Spatial point; only the first n entries are meaningful (n is 1 or 2).
using Coord = std::array<double, 2>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Error taxonomy. Every failure mode of the public surface has a named type
// so callers (and the CLI exit-code mapping) can tell contract violations
// from numerical failures.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DomainError : Error { using Error::Error; };
struct ExponentViolation : Error { using Error::Error; };
struct StructureViolation : Error { using Error::Error; };
struct SubgradientViolation : Error { using Error::Error; };
struct ConvergenceFailure : Error { using Error::Error; };
struct TruncationOrder : Error { using Error::Error; };
struct QuadratureFailure : Error { using Error::Error; };
struct SizeOverflow : Error { using Error::Error; };
struct NonSPD : Error { using Error::Error; };
struct CylinderOutOfDomain : Error { using Error::Error; };
struct MismatchedDiscretization : Error { using Error::Error; };
struct StagnationFailure : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Small dense matrix, used for N-by-n gradients and flux values. Dimensions
// are tiny (N small, n in {1,2}); value semantics throughout.
// ---------------------------------------------------------------------------

class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols) : rows_(rows), cols_(cols), a_(rows * cols, 0.0) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int i, int j) { return a_[i * cols_ + j]; }
  double operator()(int i, int j) const { return a_[i * cols_ + j]; }
  const std::vector<double>& data() const { return a_; }
  std::vector<double>& data() { return a_; }

  Mat& operator+=(const Mat& o) {
    for (size_t k = 0; k < a_.size(); ++k) a_[k] += o.a_[k];
    return *this;
  }
  Mat& operator-=(const Mat& o) {
    for (size_t k = 0; k < a_.size(); ++k) a_[k] -= o.a_[k];
    return *this;
  }
  Mat& operator*=(double s) {
    for (double& v : a_) v *= s;
    return *this;
  }
  friend Mat operator+(Mat l, const Mat& r) { return l += r; }
  friend Mat operator-(Mat l, const Mat& r) { return l -= r; }
  friend Mat operator*(double s, Mat m) { return m *= s; }

  double frobenius() const {
    double s = 0;
    for (double v : a_) s += v * v;
    return std::sqrt(s);
  }

  static double dot(const Mat& a, const Mat& b) {
    double s = 0;
    for (size_t k = 0; k < a.a_.size(); ++k) s += a.a_[k] * b.a_[k];
    return s;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> a_;
};

/// Symmetric n-by-n coefficient matrix sample (n <= 2).
struct GammaMat {
  int n = 2;
  double m[2][2] = {{1, 0}, {0, 1}};

  static GammaMat identity(int n) {
    GammaMat g;
    g.n = n;
    g.m[0][0] = 1;
    g.m[0][1] = g.m[1][0] = 0;
    g.m[1][1] = 1;
    return g;
  }

  /// Quadratic form zeta^T gamma eta over R^n for one component row.
  double form(const double* zeta, const double* eta) const {
    double s = 0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) s += m[a][b] * zeta[a] * eta[b];
    return s;
  }

  /// Eigenvalue extremes (n<=2, closed form).
  void eigen_range(double& lo, double& hi) const {
    if (n == 1) {
      lo = hi = m[0][0];
      return;
    }
    double tr = m[0][0] + m[1][1];
    double det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    double disc = std::sqrt(std::max(0.0, tr * tr / 4 - det));
    lo = tr / 2 - disc;
    hi = tr / 2 + disc;
  }
};

/// gamma-weighted inner product of two N-by-n matrices at a frozen gamma.
inline double gamma_dot(const GammaMat& g, const Mat& z, const Mat& e) {
  double s = 0;
  for (int j = 0; j < z.rows(); ++j)
    for (int a = 0; a < g.n; ++a)
      for (int b = 0; b < g.n; ++b) s += g.m[a][b] * z(j, a) * e(j, b);
  return s;
}

inline double gamma_norm_sq(const GammaMat& g, const Mat& z) {
  return gamma_dot(g, z, z);
}

// 64-bit FNV-1a, used for scenario/provenance hashing.
inline uint64_t fnv1a(const void* data, size_t len, uint64_t h = 1469598103934665603ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 1469598103934665603ull) {
  return fnv1a(s.data(), s.size(), h);
}

}  // namespace onepflow
