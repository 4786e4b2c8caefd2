#pragma once

#include <Eigen/Dense>
#include <optional>

#include "plvcsar/stats.hpp"

namespace plvcsar {

//! Check loss rho_tau(u) = u * (tau - I(u < 0)).
double check_loss(double u, double tau);

//! Score psi_tau(u) = tau - I(u < 0); psi_tau(0) is defined as tau so that
//! the score sums to ~0 at a fit with interpolated observations.
double psi(double u, double tau);

struct CheckLossProblem {
  Matrix design;    // n x m, full column rank
  Vector response;  // n
  double tau = 0.5;
};

struct QrFit {
  Vector coefficients;
  Vector residuals;
  double objective = 0.0;
  int n_interpolated = 0;
  // Set when the optimum face appears flat; the returned point is then the
  // interior-point limit rather than a vertex, and n_interpolated may be
  // below the column count.
  bool degenerate = false;
  int iterations = 0;
  double duality_gap = 0.0;
};

struct QrSolverConfig {
  double gap_tol = 1e-8;
  int max_iterations = 200;
  double rank_tol = 1e-10;  // relative rank-detection threshold
  double step_damping = 0.99995;
  bool polish = true;  // snap to the optimal vertex when it is unambiguous
};

// Per-design state shared across many responses: the rank check and the
// Gram-matrix factorization used to start the dual iteration. Immutable
// after construction; solve() is const and safe to call concurrently.
class QrDesign {
 public:
  explicit QrDesign(Matrix design, QrSolverConfig config = {});

  const Matrix& design() const { return design_; }
  const QrSolverConfig& config() const { return config_; }
  Eigen::Index rows() const { return design_.rows(); }
  Eigen::Index cols() const { return design_.cols(); }

  QrFit solve(const Vector& response, double tau,
              const Vector* warm_coefficients = nullptr) const;

 private:
  Matrix design_;
  Matrix scaled_;      // column-equilibrated copy used by the iteration
  Vector col_scale_;   // design = scaled * diag(col_scale)
  QrSolverConfig config_;
  Eigen::LLT<Matrix> gram_llt_;  // scaled' * scaled
};

//! Exact minimization of sum_i rho_tau(y_i - x_i' b) by a primal-dual
//! interior-point method on the bounded-variable dual LP (the classical
//! Frisch-Newton scheme with Mehrotra corrector steps).
QrFit solve_qr(const CheckLossProblem& problem, const QrSolverConfig& config = {});

}  // namespace plvcsar
