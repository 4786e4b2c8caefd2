#pragma once

#include <Eigen/Dense>

#include "plvcsar/stats.hpp"

namespace plvcsar {

// Normalized B-spline basis on [u_min, u_max] with interior knots at the
// empirical quantiles of the smoothing variable and (degree + 1)-fold
// replicated boundary knots.
struct SplineBasis {
  int interior_knot_count = 0;  // k_n
  int degree = 3;               // h (cubic by default)
  Vector knots;                 // k_n + 2 * (degree + 1) nondecreasing entries

  int basis_dim() const { return interior_knot_count + degree + 1; }
  double u_min() const { return knots(0); }
  double u_max() const { return knots(knots.size() - 1); }
};

SplineBasis make_knots(const Vector& u_values, int k_n, int degree = 3);

//! Values of all basis functions at u. Nonnegative, sum to one, and at most
//! degree + 1 entries are nonzero. Points outside the knot range are clamped
//! (with a warning).
Vector eval_basis(double u, const SplineBasis& basis);

// Design block for the varying-coefficient part: row i is
// (Z_i1 * pi(U_i)', ..., Z_iq * pi(U_i)').
struct VaryingCoefBlock {
  Matrix pi_matrix;  // n x (q * basis_dim)
  int q = 0;
  int q_kn = 0;  // q * basis_dim
};

VaryingCoefBlock build_pi(const Matrix& Z, const Vector& U,
                          const SplineBasis& basis);

//! Schwarz-type criterion log(objective) + log(n)/(2n) * (2 + p + q_kn).
//! A zero objective returns -infinity with a saturation warning.
double sic(double objective, int n, int p, int q_kn);

//! Same criterion with an explicit parameter count in the penalty.
double sic_penalized(double objective, int n, int parameter_count);

}  // namespace plvcsar
