#pragma once

// Reference implementations used only by tests. These are deliberately
// naive (enumeration, textbook recursions, double loops) and share no code
// with the library paths they check.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

namespace oracles {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double rho_tau(double u, double tau) {
  return u >= 0.0 ? tau * u : (tau - 1.0) * u;
}

inline double objective(const Matrix& design, const Vector& y, const Vector& b,
                        double tau) {
  Vector r = y - design * b;
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) total += rho_tau(r(i), tau);
  return total;
}

// Exhaustive vertex enumeration: the check-loss LP optimum interpolates m
// observations, so scanning every exact-fit subset finds the global minimum.
inline double vertex_enum_objective(const Matrix& design, const Vector& y,
                                    double tau) {
  const Eigen::Index n = design.rows();
  const Eigen::Index m = design.cols();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) idx[static_cast<std::size_t>(j)] = j;

  double best = std::numeric_limits<double>::infinity();
  while (true) {
    Matrix sub(m, m);
    Vector rhs(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      sub.row(j) = design.row(idx[static_cast<std::size_t>(j)]);
      rhs(j) = y(idx[static_cast<std::size_t>(j)]);
    }
    Eigen::FullPivLU<Matrix> lu(sub);
    if (lu.isInvertible()) {
      Vector b = lu.solve(rhs);
      best = std::min(best, objective(design, y, b, tau));
    }

    // next combination
    Eigen::Index k = m - 1;
    while (k >= 0 && idx[static_cast<std::size_t>(k)] == n - m + k) --k;
    if (k < 0) break;
    ++idx[static_cast<std::size_t>(k)];
    for (Eigen::Index j = k + 1; j < m; ++j) {
      idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
  return best;
}

// Intercept-only problems: the optimum sits at an order statistic.
inline double brute_force_scalar_fit(const Vector& y, double tau,
                                     double* arg_out = nullptr) {
  double best = std::numeric_limits<double>::infinity();
  double arg = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double total = 0.0;
    for (Eigen::Index k = 0; k < y.size(); ++k) total += rho_tau(y(k) - y(i), tau);
    if (total < best) {
      best = total;
      arg = y(i);
    }
  }
  if (arg_out != nullptr) *arg_out = arg;
  return best;
}

// Textbook Cox-de Boor recursion, one basis function at a time; the last
// nonempty interval is treated as closed on the right.
inline double bspline_recursive(const Vector& knots, int i, int degree, double u) {
  const double u_max = knots(knots.size() - 1);
  if (degree == 0) {
    bool inside = knots(i) <= u && u < knots(i + 1);
    bool right_edge = u == u_max && knots(i) < knots(i + 1) && knots(i + 1) == u_max;
    return (inside || right_edge) ? 1.0 : 0.0;
  }
  double left = 0.0, right = 0.0;
  double den_l = knots(i + degree) - knots(i);
  if (den_l > 0.0) {
    left = (u - knots(i)) / den_l * bspline_recursive(knots, i, degree - 1, u);
  }
  double den_r = knots(i + degree + 1) - knots(i + 1);
  if (den_r > 0.0) {
    right = (knots(i + degree + 1) - u) / den_r *
            bspline_recursive(knots, i + 1, degree - 1, u);
  }
  return left + right;
}

// Coefficient-perturbation optimality certificate for a check-loss fit.
inline bool perturbation_optimal(const Matrix& design, const Vector& y,
                                 const Vector& b, double tau, double delta,
                                 double tol) {
  const double base = objective(design, y, b, tau);
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    for (double sign : {1.0, -1.0}) {
      Vector bp = b;
      bp(j) += sign * delta;
      if (objective(design, y, bp, tau) < base - tol) return false;
    }
  }
  return true;
}

}  // namespace oracles
