#include "plvcsar/qr_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "plvcsar/errors.hpp"

namespace plvcsar {

double check_loss(double u, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw parameter_error("check_loss: tau must lie in (0, 1)");
  }
  return u * (tau - (u < 0.0 ? 1.0 : 0.0));
}

double psi(double u, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw parameter_error("psi: tau must lie in (0, 1)");
  }
  return tau - (u < 0.0 ? 1.0 : 0.0);
}

namespace {

double objective_at(const Vector& residuals, double tau) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < residuals.size(); ++i) {
    double u = residuals(i);
    total += u * (tau - (u < 0.0 ? 1.0 : 0.0));
  }
  return total;
}

// Largest step a in [0, inf) keeping v + a*dv > 0.
double ratio_bound(const Vector& v, const Vector& dv) {
  double bound = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) bound = std::min(bound, -v(i) / dv(i));
  }
  return bound;
}

}  // namespace

QrDesign::QrDesign(Matrix design, QrSolverConfig config)
    : design_(std::move(design)), config_(config) {
  const Eigen::Index n = design_.rows();
  const Eigen::Index m = design_.cols();
  if (m < 1 || n < m) {
    throw data_error("QrDesign: require n >= m >= 1");
  }
  if (!design_.allFinite()) {
    throw data_error("QrDesign: design contains non-finite entries");
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(design_);
  qr.setThreshold(config_.rank_tol);
  if (qr.rank() < m) {
    std::ostringstream msg;
    msg << "QrDesign: design is rank deficient (rank " << qr.rank() << " of "
        << m << ")";
    throw degenerate_design_error(msg.str());
  }

  // Column equilibration; coefficients are mapped back on output.
  col_scale_.resize(m);
  scaled_ = design_;
  for (Eigen::Index j = 0; j < m; ++j) {
    col_scale_(j) = scaled_.col(j).norm();
    scaled_.col(j) /= col_scale_(j);
  }

  Matrix gram(m, m);
  gram.setZero();
  gram.selfadjointView<Eigen::Lower>().rankUpdate(scaled_.transpose());
  gram_llt_.compute(gram.selfadjointView<Eigen::Lower>());
  if (gram_llt_.info() != Eigen::Success) {
    throw degenerate_design_error("QrDesign: Gram matrix is not positive definite");
  }
}

QrFit QrDesign::solve(const Vector& response, double tau,
                      const Vector* warm_coefficients) const {
  const Eigen::Index n = design_.rows();
  const Eigen::Index m = design_.cols();
  if (response.size() != n) {
    throw data_error("solve_qr: response length does not match the design");
  }
  if (!(tau > 0.0 && tau < 1.0)) {
    throw parameter_error("solve_qr: tau must lie in (0, 1)");
  }
  if (!response.allFinite()) {
    throw data_error("solve_qr: response contains non-finite entries");
  }

  // Bounded-variable dual LP: min c'x s.t. A' x = b, 0 <= x <= 1, with
  // c = -response and b = (1 - tau) A' 1 on the equilibrated design A. The
  // equality multipliers converge to the negated scaled coefficients.
  const Vector c = -response;
  Vector x = Vector::Constant(n, 1.0 - tau);
  Vector s = Vector::Constant(n, tau);
  const Vector b = scaled_.transpose() * x;

  Vector yv;
  if (warm_coefficients != nullptr && warm_coefficients->size() == m) {
    yv = -(col_scale_.cwiseProduct(*warm_coefficients));
  } else {
    yv = gram_llt_.solve(scaled_.transpose() * c);
  }

  Vector r = c - scaled_ * yv;
  const double e0 = std::max(1e-6, 1e-4 * r.cwiseAbs().maxCoeff());
  Vector z = r.cwiseMax(0.0).array() + e0;
  Vector w = (-r).cwiseMax(0.0).array() + e0;

  double gap = c.dot(x) - b.dot(yv) + w.sum();

  Vector q(n), rzw(n), rhs(m), dy(m), pvec(n), dx(n), ds(n), dz(n), dw(n);
  Vector dxdz(n), dsdw(n), corr(n);
  Matrix scaled(n, m), aqa(m, m);
  Eigen::LDLT<Matrix> ldlt(m);

  int it = 0;
  int stall_count = 0;
  const double damping = config_.step_damping;
  while (gap > config_.gap_tol && it < config_.max_iterations) {
    ++it;
    q = (z.array() / x.array() + w.array() / s.array()).inverse();
    rzw = z - w;

    scaled = scaled_.array().colwise() * q.array().sqrt();
    aqa.setZero();
    aqa.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose());
    ldlt.compute(aqa.selfadjointView<Eigen::Lower>());

    rhs.noalias() = scaled_.transpose() * (q.cwiseProduct(rzw));
    dy = ldlt.solve(rhs);
    pvec.noalias() = scaled_ * dy;
    dx = q.cwiseProduct(pvec - rzw);
    ds = -dx;
    dz = -z.array() - (z.array() / x.array()) * dx.array();
    dw = -w.array() + (w.array() / s.array()) * dx.array();

    double bound_p = std::min(ratio_bound(x, dx), ratio_bound(s, ds));
    double bound_d = std::min(ratio_bound(z, dz), ratio_bound(w, dw));
    double deltap = std::min(1.0, damping * bound_p);
    double deltad = std::min(1.0, damping * bound_d);

    if (std::min(damping * bound_p, damping * bound_d) < 1.0) {
      // Mehrotra corrector: recenter toward mu and absorb the second-order
      // complementarity terms of the affine direction.
      double mu0 = x.dot(z) + s.dot(w);
      double g = (x + deltap * dx).dot(z + deltad * dz) +
                 (s + deltap * ds).dot(w + deltad * dw);
      double mu = mu0 * std::pow(g / mu0, 3) / (2.0 * static_cast<double>(n));

      dxdz = dx.cwiseProduct(dz);
      dsdw = ds.cwiseProduct(dw);
      corr = q.array() * (mu * (x.array().inverse() - s.array().inverse()) -
                          dxdz.array() / x.array() +
                          dsdw.array() / s.array());
      dy = ldlt.solve(rhs - scaled_.transpose() * corr);
      pvec.noalias() = scaled_ * dy;
      dx = q.cwiseProduct(pvec - rzw) + corr;
      ds = -dx;
      dz = mu * x.array().inverse() - z.array() - dxdz.array() / x.array() -
           (z.array() / x.array()) * dx.array();
      dw = mu * s.array().inverse() - w.array() - dsdw.array() / s.array() +
           (w.array() / s.array()) * dx.array();

      deltap = std::min(1.0, damping * std::min(ratio_bound(x, dx), ratio_bound(s, ds)));
      deltad = std::min(1.0, damping * std::min(ratio_bound(z, dz), ratio_bound(w, dw)));
    }

    if (!dy.allFinite() || !dx.allFinite() || !dz.allFinite() || !dw.allFinite()) {
      break;
    }

    x += deltap * dx;
    s += deltap * ds;
    yv += deltad * dy;
    z += deltad * dz;
    w += deltad * dw;
    double prev_gap = gap;
    gap = c.dot(x) - b.dot(yv) + w.sum();
    // Break once the gap has hit its floating-point floor.
    stall_count = (gap > 0.999 * prev_gap) ? stall_count + 1 : 0;
    if (stall_count >= 10) break;
  }

  QrFit fit;
  fit.iterations = it;
  fit.duality_gap = gap;
  fit.coefficients = -yv;
  fit.residuals = response - scaled_ * fit.coefficients;
  fit.objective = objective_at(fit.residuals, tau);

  // A stalled iterate is accepted when the remaining gap is negligible
  // against the attained objective.
  const bool relative_ok = gap <= 1e-6 * (1.0 + fit.objective);
  if ((!(gap <= config_.gap_tol) && !relative_ok) || !yv.allFinite()) {
    std::ostringstream msg;
    msg << "solve_qr: interior point did not converge (iterations " << it
        << ", duality gap " << gap << ", n " << n << ", m " << m << ", tau "
        << tau << ")";
    throw solver_error(msg.str());
  }

  bool polished = false;
  if (config_.polish) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::nth_element(order.begin(), order.begin() + (m - 1), order.end(),
                     [&](Eigen::Index a, Eigen::Index bidx) {
                       return std::fabs(fit.residuals(a)) <
                              std::fabs(fit.residuals(bidx));
                     });
    Matrix basis(m, m);
    Vector rhs_b(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      basis.row(j) = scaled_.row(order[static_cast<std::size_t>(j)]);
      rhs_b(j) = response(order[static_cast<std::size_t>(j)]);
    }
    Eigen::ColPivHouseholderQR<Matrix> bqr(basis);
    bqr.setThreshold(config_.rank_tol);
    if (bqr.rank() == m) {
      Vector vertex = bqr.solve(rhs_b);
      double dist = (vertex - fit.coefficients).lpNorm<Eigen::Infinity>();
      if (dist <= 1e-5 * (1.0 + fit.coefficients.lpNorm<Eigen::Infinity>())) {
        Vector vres = response - scaled_ * vertex;
        double vobj = objective_at(vres, tau);
        if (vobj <= fit.objective + config_.gap_tol) {
          fit.coefficients = vertex;
          fit.residuals = vres;
          fit.objective = vobj;
          polished = true;
        }
      }
    }
    fit.degenerate = !polished;
  }

  // Map back from the equilibrated columns.
  fit.coefficients = fit.coefficients.cwiseQuotient(col_scale_);

  const double scale_y = response.cwiseAbs().maxCoeff();
  const double interp_tol =
      std::max(1e-8 * (1.0 + scale_y),
               4.0 * fit.duality_gap / std::min(tau, 1.0 - tau));
  fit.n_interpolated = static_cast<int>(
      (fit.residuals.cwiseAbs().array() <= interp_tol).count());
  return fit;
}

QrFit solve_qr(const CheckLossProblem& problem, const QrSolverConfig& config) {
  QrDesign design(problem.design, config);
  return design.solve(problem.response, problem.tau);
}

}  // namespace plvcsar
