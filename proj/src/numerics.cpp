#include "hilbandit/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace hilbandit {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::IterationLimit: return "IterationLimit";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::HistoryWidthMismatch: return "HistoryWidthMismatch";
    case ErrorKind::NonMonotoneTimes: return "NonMonotoneTimes";
    case ErrorKind::InsufficientGroups: return "InsufficientGroups";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorKind::UnknownContext: return "UnknownContext";
    case ErrorKind::EpisodeFinished: return "EpisodeFinished";
    case ErrorKind::EmptyTrace: return "EmptyTrace";
    case ErrorKind::AllZeroDiffs: return "AllZeroDiffs";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::WrongPhase: return "WrongPhase";
    case ErrorKind::InvalidAction: return "InvalidAction";
    case ErrorKind::UnknownSession: return "UnknownSession";
    case ErrorKind::CapacityExceeded: return "CapacityExceeded";
  }
  return "Unknown";
}

}  // namespace hilbandit

namespace hilbandit::numerics {

namespace {

// In-place lower Cholesky factor. Returns the index of the first failing pivot, or -1.
Eigen::Index cholesky_factor(Matrix& l, double pivot_floor) {
  const Eigen::Index n = l.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = l(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > pivot_floor)) return j;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = l(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return -1;
}

Vector cholesky_substitute(const Matrix& l, const Vector& b) {
  const Eigen::Index n = l.rows();
  Vector z = b;
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = z(i);
    for (Eigen::Index k = 0; k < i; ++k) s -= l(i, k) * z(k);
    z(i) = s / l(i, i);
  }
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    double s = z(i);
    for (Eigen::Index k = i + 1; k < n; ++k) s -= l(k, i) * z(k);
    z(i) = s / l(i, i);
  }
  return z;
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorKind::DimensionMismatch, std::string(what) + " has non-finite entries");
}

enum class Bound : unsigned char { Free, Lower, Upper };

}  // namespace

BoxConstraint BoxConstraint::uniform(Eigen::Index n, double lo, double hi) {
  return {Vector::Constant(n, lo), Vector::Constant(n, hi)};
}

BoxConstraint BoxConstraint::nonnegative(Eigen::Index n) {
  return uniform(n, 0.0, std::numeric_limits<double>::infinity());
}

bool BoxConstraint::valid() const {
  if (lower.size() != upper.size()) return false;
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (std::isnan(lower(i)) || std::isnan(upper(i)) || lower(i) > upper(i)) return false;
  }
  return true;
}

Vector cholesky_solve(const Matrix& a, const Vector& b, const Tolerances& tol) {
  if (a.rows() != a.cols() || a.rows() != b.size()) {
    throw Error(ErrorKind::DimensionMismatch, "cholesky_solve expects square A matching b");
  }
  Matrix l = a;
  if (const auto bad = cholesky_factor(l, tol.pivot); bad >= 0) {
    throw Error(ErrorKind::NotPositiveDefinite, "pivot " + std::to_string(bad) + " below threshold");
  }
  return cholesky_substitute(l, b);
}

Vector ridge_solve(const Matrix& x, const Vector& y, double lambda, const Tolerances& tol) {
  if (x.rows() != y.size()) throw Error(ErrorKind::DimensionMismatch, "ridge_solve: rows(X) != len(y)");
  if (!(lambda >= 0.0)) throw Error(ErrorKind::DimensionMismatch, "ridge_solve: lambda must be >= 0");
  require_finite(x, "X");
  Matrix gram = x.transpose() * x;
  gram.diagonal().array() += lambda;
  const Vector rhs = x.transpose() * y;
  double floor = tol.pivot;
  if (lambda == 0.0) floor = std::max(floor, tol.rank * std::max(1.0, gram.diagonal().maxCoeff()));
  Matrix l = gram;
  if (cholesky_factor(l, floor) >= 0) {
    throw Error(ErrorKind::SingularSystem, "normal equations are singular; add a ridge penalty");
  }
  return cholesky_substitute(l, rhs);
}

Vector min_norm_lstsq(const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) throw Error(ErrorKind::DimensionMismatch, "min_norm_lstsq: rows(X) != len(y)");
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(x);
  return cod.solve(y);
}

Vector bvls_gram(const Matrix& gram, const Vector& xty, const BoxConstraint& box, const Tolerances& tol) {
  const Eigen::Index n = gram.rows();
  if (gram.cols() != n || xty.size() != n || box.lower.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "bvls: inconsistent problem dimensions");
  }
  if (!box.valid()) throw Error(ErrorKind::DimensionMismatch, "bvls: invalid box");

  Vector theta(n);
  std::vector<Bound> state(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lo = box.lower(i), hi = box.upper(i);
    theta(i) = std::clamp(0.0, lo, hi);
    if (theta(i) == lo) state[i] = Bound::Lower;
    else if (theta(i) == hi) state[i] = Bound::Upper;
    else state[i] = Bound::Free;
  }

  // Solve the free-set subproblem with the bound coordinates held fixed.
  auto solve_free = [&](std::vector<Eigen::Index>& free) {
    free.clear();
    for (Eigen::Index i = 0; i < n; ++i)
      if (state[i] == Bound::Free) free.push_back(i);
    const auto k = static_cast<Eigen::Index>(free.size());
    Vector z(k);
    if (k == 0) return z;
    Matrix gff(k, k);
    Vector rhs(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      double r = xty(free[a]);
      for (Eigen::Index j = 0; j < n; ++j)
        if (state[j] != Bound::Free) r -= gram(free[a], j) * theta(j);
      rhs(a) = r;
      for (Eigen::Index b = 0; b < k; ++b) gff(a, b) = gram(free[a], free[b]);
    }
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(gff);
    return Vector(cod.solve(rhs));
  };

  // Step from theta toward z on the free set, pinning coordinates that leave the box,
  // until the subproblem solution is feasible.
  auto settle = [&](std::vector<Eigen::Index>& free, Vector z) {
    while (!free.empty()) {
      double alpha = 1.0;
      bool feasible = true;
      for (size_t a = 0; a < free.size(); ++a) {
        const auto i = free[a];
        if (z(a) < box.lower(i)) {
          feasible = false;
          alpha = std::min(alpha, (box.lower(i) - theta(i)) / (z(a) - theta(i)));
        } else if (z(a) > box.upper(i)) {
          feasible = false;
          alpha = std::min(alpha, (box.upper(i) - theta(i)) / (z(a) - theta(i)));
        }
      }
      if (feasible) {
        for (size_t a = 0; a < free.size(); ++a) theta(free[a]) = z(a);
        return;
      }
      alpha = std::clamp(alpha, 0.0, 1.0);
      for (size_t a = 0; a < free.size(); ++a) {
        const auto i = free[a];
        double v = theta(i) + alpha * (z(a) - theta(i));
        const double span = 1e-14 * (1.0 + std::abs(v));
        if (v <= box.lower(i) + span) {
          theta(i) = box.lower(i);
          state[i] = Bound::Lower;
        } else if (v >= box.upper(i) - span) {
          theta(i) = box.upper(i);
          state[i] = Bound::Upper;
        } else {
          theta(i) = v;
        }
      }
      z = solve_free(free);
    }
  };

  std::vector<Eigen::Index> free;
  if (std::any_of(state.begin(), state.end(), [](Bound s) { return s == Bound::Free; })) {
    settle(free, solve_free(free));
  }

  const long cap = static_cast<long>(tol.iteration_factor) * std::max<Eigen::Index>(n, 1);
  std::vector<char> excluded(static_cast<size_t>(n), 0);
  for (long iter = 0;; ++iter) {
    if (iter >= cap) throw Error(ErrorKind::IterationLimit, "bvls active-set loop exceeded " + std::to_string(cap));
    const Vector grad = gram * theta - xty;
    Eigen::Index pick = -1;
    double best = tol.kkt;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (excluded[i] || box.lower(i) == box.upper(i)) continue;
      double pull = 0.0;
      if (state[i] == Bound::Lower) pull = -grad(i);
      else if (state[i] == Bound::Upper) pull = grad(i);
      if (pull > best) {
        best = pull;
        pick = i;
      }
    }
    if (pick < 0) return theta;

    const Bound from = state[pick];
    state[pick] = Bound::Free;
    Vector z = solve_free(free);
    const auto pos = static_cast<Eigen::Index>(std::find(free.begin(), free.end(), pick) - free.begin());
    const bool wrong_way = from == Bound::Lower ? !(z(pos) > box.lower(pick)) : !(z(pos) < box.upper(pick));
    if (wrong_way) {
      // Degenerate direction: the freed coordinate would bounce straight back.
      state[pick] = from;
      excluded[pick] = 1;
      continue;
    }
    std::fill(excluded.begin(), excluded.end(), 0);
    settle(free, std::move(z));
  }
}

Vector nnls(const Matrix& x, const Vector& y, const Tolerances& tol) {
  if (x.rows() != y.size()) throw Error(ErrorKind::DimensionMismatch, "nnls: rows(X) != len(y)");
  require_finite(x, "X");
  return bvls_gram(x.transpose() * x, x.transpose() * y, BoxConstraint::nonnegative(x.cols()), tol);
}

Vector bvls(const Matrix& x, const Vector& y, const BoxConstraint& box, const Tolerances& tol) {
  if (x.rows() != y.size()) throw Error(ErrorKind::DimensionMismatch, "bvls: rows(X) != len(y)");
  if (box.lower.size() != x.cols()) throw Error(ErrorKind::DimensionMismatch, "bvls: box width != cols(X)");
  require_finite(x, "X");
  return bvls_gram(x.transpose() * x, x.transpose() * y, box, tol);
}

Vector ls_gradient(const Matrix& x, const Vector& y, const Vector& theta) {
  return x.transpose() * (x * theta - y);
}

double sum_squares(const Matrix& x, const Vector& y, const Vector& theta) {
  return (x * theta - y).squaredNorm();
}

}  // namespace hilbandit::numerics
