#pragma once

#include <Eigen/Dense>

#include "hilbandit/error.hpp"

namespace hilbandit::numerics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Tolerances shared by every solver in this module.
struct Tolerances {
  double pivot = 1e-12;
  double kkt = 1e-8;
  /// Relative rank test used when deciding an unregularized system is singular.
  double rank = 1e-11;
  /// Active-set iteration cap as a multiple of the column count.
  int iteration_factor = 10;
};

/// Per-coordinate bounds; infinities are allowed on either side.
struct BoxConstraint {
  Vector lower;
  Vector upper;

  static BoxConstraint uniform(Eigen::Index n, double lo, double hi);
  static BoxConstraint nonnegative(Eigen::Index n);
  bool valid() const;
};

Vector cholesky_solve(const Matrix& a, const Vector& b, const Tolerances& tol = {});

/// argmin ||X theta - y||^2 + lambda ||theta||^2 through the normal equations.
Vector ridge_solve(const Matrix& x, const Vector& y, double lambda, const Tolerances& tol = {});

/// Minimum-norm least-squares solution; used where the design is rank deficient by construction.
Vector min_norm_lstsq(const Matrix& x, const Vector& y);

/// Lawson-Hanson active set for theta >= 0.
Vector nnls(const Matrix& x, const Vector& y, const Tolerances& tol = {});

/// Bounded-variable least squares (Stark-Parker style active set).
Vector bvls(const Matrix& x, const Vector& y, const BoxConstraint& box, const Tolerances& tol = {});

/// Same solvers in Gram form: minimize 0.5 theta'G theta - c'theta with G = X'X, c = X'y.
/// The design-matrix entry points reduce to these.
Vector bvls_gram(const Matrix& gram, const Vector& xty, const BoxConstraint& box,
                 const Tolerances& tol = {});

/// Half-gradient X'(X theta - y) of the squared residual.
Vector ls_gradient(const Matrix& x, const Vector& y, const Vector& theta);

double sum_squares(const Matrix& x, const Vector& y, const Vector& theta);

}  // namespace hilbandit::numerics
