#pragma once
// Brute-force reference implementations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "hilbandit/numerics.hpp"
#include "hilbandit/rng.hpp"
#include "hilbandit/stats.hpp"

namespace oracle {

using hilbandit::numerics::Matrix;
using hilbandit::numerics::Vector;

inline Matrix random_matrix(hilbandit::Rng& rng, int rows, int cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline Vector random_vector(hilbandit::Rng& rng, int n) { return random_matrix(rng, n, 1).col(0); }

/// Gauss-Jordan inverse with partial pivoting.
inline Matrix gauss_jordan_inverse(Matrix a) {
  const int n = static_cast<int>(a.rows());
  Matrix inv = Matrix::Identity(n, n);
  for (int c = 0; c < n; ++c) {
    int p = c;
    for (int r = c + 1; r < n; ++r)
      if (std::fabs(a(r, c)) > std::fabs(a(p, c))) p = r;
    a.row(c).swap(a.row(p));
    inv.row(c).swap(inv.row(p));
    const double d = a(c, c);
    a.row(c) /= d;
    inv.row(c) /= d;
    for (int r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a(r, c);
      a.row(r) -= f * a.row(c);
      inv.row(r) -= f * inv.row(c);
    }
  }
  return inv;
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
inline double power_iteration(const Matrix& g) {
  Vector v = Vector::Ones(g.rows());
  double lambda = 0.0;
  for (int i = 0; i < 2000; ++i) {
    Vector w = g * v;
    const double nrm = w.norm();
    if (nrm == 0.0) return 0.0;
    lambda = v.dot(w) / v.dot(v);
    v = w / nrm;
  }
  return std::max(lambda, (g * v).norm());
}

/// Gradient descent on ||X theta - y||^2 + lambda ||theta||^2.
inline Vector gd_ridge(const Matrix& x, const Vector& y, double lambda) {
  const Matrix g = x.transpose() * x + lambda * Matrix::Identity(x.cols(), x.cols());
  const Vector c = x.transpose() * y;
  const double step = 1.0 / power_iteration(g);
  Vector theta = Vector::Zero(x.cols());
  for (int i = 0; i < 1000000; ++i) {
    const Vector grad = g * theta - c;
    if (grad.lpNorm<Eigen::Infinity>() < 1e-14) break;
    theta -= step * grad;
  }
  return theta;
}

inline double objective(const Matrix& x, const Vector& y, const Vector& theta) {
  return (x * theta - y).squaredNorm();
}

/// Projected gradient on the box with step 1/L.
inline Vector projected_gradient(const Matrix& x, const Vector& y, const Vector& lo, const Vector& hi,
                                 int iterations = 100000) {
  const Matrix g = x.transpose() * x;
  const Vector c = x.transpose() * y;
  const double step = 1.0 / power_iteration(g);
  Vector theta = (Vector::Zero(x.cols()).cwiseMax(lo)).cwiseMin(hi);
  for (int i = 0; i < iterations; ++i) theta = (theta - step * (g * theta - c)).cwiseMax(lo).cwiseMin(hi);
  return theta;
}

/// Dense grid over [0, hi]^2 at `step`, refined around the best point at step^2.
inline double grid_nnls_2d(const Matrix& x, const Vector& y, double hi = 3.0, double step = 1e-3) {
  const Matrix g = x.transpose() * x;
  const Vector c = x.transpose() * y;
  const double yy = y.squaredNorm();
  auto f = [&](double a, double b) {
    return g(0, 0) * a * a + 2 * g(0, 1) * a * b + g(1, 1) * b * b - 2 * (c(0) * a + c(1) * b) + yy;
  };
  const int n = static_cast<int>(std::lround(hi / step));
  double best = std::numeric_limits<double>::infinity();
  int bi = 0, bj = 0;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const double v = f(i * step, j * step);
      if (v < best) best = v, bi = i, bj = j;
    }
  const double fine = step * step;
  const int m = static_cast<int>(std::lround(step / fine));
  for (int i = -m; i <= m; ++i)
    for (int j = -m; j <= m; ++j) {
      const double a = bi * step + i * fine, b = bj * step + j * fine;
      if (a < 0 || b < 0 || a > hi || b > hi) continue;
      best = std::min(best, f(a, b));
    }
  return best;
}

// ---- rank statistics by enumeration ----

inline double mw_u(const std::vector<double>& x, const std::vector<double>& y) {
  double u = 0.0;
  for (double a : x)
    for (double b : y) u += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  return u;
}

inline double tail_p(double obs, const std::vector<double>& null, hilbandit::stats::Alternative alt) {
  double le = 0, ge = 0;
  for (double v : null) {
    le += v <= obs + 1e-9;
    ge += v >= obs - 1e-9;
  }
  le /= static_cast<double>(null.size());
  ge /= static_cast<double>(null.size());
  switch (alt) {
    case hilbandit::stats::Alternative::Less: return le;
    case hilbandit::stats::Alternative::Greater: return ge;
    default: return std::min(1.0, 2 * std::min(le, ge));
  }
}

/// Permutation null: every way of assigning the pooled values to groups of sizes (n1, n2).
inline double mann_whitney_enumerate(const std::vector<double>& x, const std::vector<double>& y,
                                     hilbandit::stats::Alternative alt) {
  std::vector<double> pooled(x);
  pooled.insert(pooled.end(), y.begin(), y.end());
  const size_t n = pooled.size(), n1 = x.size();
  std::vector<double> null;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<size_t>(__builtin_popcount(mask)) != n1) continue;
    std::vector<double> a, b;
    for (size_t i = 0; i < n; ++i) (mask >> i & 1 ? a : b).push_back(pooled[i]);
    null.push_back(mw_u(a, b));
  }
  return tail_p(mw_u(x, y), null, alt);
}

/// Midranks of |d| for nonzero d.
inline std::vector<double> abs_midranks(const std::vector<double>& d) {
  const size_t n = d.size();
  std::vector<double> r(n);
  for (size_t i = 0; i < n; ++i) {
    double less = 0, eq = 0;
    for (size_t j = 0; j < n; ++j) {
      less += std::fabs(d[j]) < std::fabs(d[i]);
      eq += std::fabs(d[j]) == std::fabs(d[i]);
    }
    r[i] = less + (eq + 1) / 2.0;
  }
  return r;
}

/// Sign-flip null over all 2^n patterns of the nonzero differences.
inline double wilcoxon_enumerate(const std::vector<double>& diffs, hilbandit::stats::Alternative alt) {
  std::vector<double> d;
  for (double v : diffs)
    if (v != 0.0) d.push_back(v);
  const auto r = abs_midranks(d);
  double obs = 0;
  for (size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0) obs += r[i];
  std::vector<double> null;
  for (std::uint32_t mask = 0; mask < (1u << d.size()); ++mask) {
    double w = 0;
    for (size_t i = 0; i < d.size(); ++i)
      if (mask >> i & 1) w += r[i];
    null.push_back(w);
  }
  return tail_p(obs, null, alt);
}

}  // namespace oracle
