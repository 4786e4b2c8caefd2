#include "plvcsar/ranktest.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "plvcsar/errors.hpp"
#include "plvcsar/log.hpp"

namespace plvcsar {

SparsityWeights estimate_sparsity(const Vector& residuals, double tau,
                                  const stats::DensityConfig& config) {
  stats::DensityWeights dens = stats::density_at_zero(residuals, tau, config);
  SparsityWeights out;
  out.bandwidth = dens.bandwidth;
  out.B_diag = dens.values;
  const double floor = 1e-8;
  int floored = 0;
  for (Eigen::Index i = 0; i < out.B_diag.size(); ++i) {
    if (out.B_diag(i) < floor) {
      out.B_diag(i) = floor;
      ++floored;
    }
  }
  if (floored > 0) {
    warn("estimate_sparsity: density weights floored at 1e-8");
  }
  return out;
}

double reference_pvalue(double statistic, int df, ReferenceDist reference) {
  if (reference == ReferenceDist::chi_square) {
    if (statistic <= 0.0) return 1.0;
    return stats::chi2_upper_tail(statistic, df);
  }
  return 1.0 - stats::norm_cdf(statistic);
}

namespace {

std::vector<int> complement_of(const std::vector<int>& chosen, int total) {
  std::set<int> in(chosen.begin(), chosen.end());
  std::vector<int> out;
  for (int j = 0; j < total; ++j) {
    if (!in.count(j)) out.push_back(j);
  }
  return out;
}

Matrix select_columns(const Matrix& src, const std::vector<int>& cols) {
  Matrix out(src.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = src.col(cols[j]);
  }
  return out;
}

void validate_partition(const std::vector<int>& tested, int total,
                        const char* what) {
  if (tested.empty()) {
    throw parameter_error(std::string(what) + ": empty tested column set");
  }
  std::set<int> seen;
  for (int j : tested) {
    if (j < 0 || j >= total) {
      throw parameter_error(std::string(what) + ": tested column out of range");
    }
    if (!seen.insert(j).second) {
      throw parameter_error(std::string(what) + ": duplicate tested column");
    }
  }
}

// Projects the tested block off the retained design under density weights
// and assembles the quadratic-form statistic.
RankScoreResult rank_score_statistic(const Matrix& retained, const Matrix& tested,
                                     const Vector& resid, double tau,
                                     const RankTestConfig& config) {
  const Eigen::Index n = retained.rows();
  SparsityWeights sw = estimate_sparsity(resid, tau, config.sparsity);
  Vector bs = sw.B_diag.cwiseSqrt();

  Matrix weighted = retained.array().colwise() * bs.array();
  Matrix gram = weighted.transpose() * weighted;  // X*' B X*
  Eigen::LDLT<Matrix> ldlt(gram);
  if (ldlt.info() != Eigen::Success) {
    throw singular_matrix_error(
        "rank score test: weighted retained design is singular");
  }

  Matrix G;
  if (config.weighted_tested_block) {
    Matrix tw = tested.array().colwise() * bs.array();
    G = tw - (weighted * ldlt.solve(weighted.transpose() * tw));
  } else {
    G = tested -
        (weighted * ldlt.solve(weighted.transpose() *
                               (tested.array().colwise() * bs.array()).matrix()));
  }

  Vector psi_vec(n);
  for (Eigen::Index i = 0; i < n; ++i) psi_vec(i) = psi(resid(i), tau);

  const double root_n = std::sqrt(static_cast<double>(n));
  Vector S = G.transpose() * psi_vec / root_n;
  Matrix Q = G.transpose() * (G.array().colwise() * psi_vec.array().square()).matrix() /
             static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Matrix> es(Q);
  if (es.info() != Eigen::Success) {
    throw singular_matrix_error("rank score test: Q_n decomposition failed");
  }
  double lmax = es.eigenvalues().maxCoeff();
  double lmin = es.eigenvalues().minCoeff();
  if (!(lmax > 0.0) || !std::isfinite(lmax)) {
    throw singular_matrix_error(
        "rank score test: Q_n is singular (minimum eigenvalue not bounded away "
        "from zero)");
  }

  double rs;
  if (lmin <= lmax * 1e-10) {
    warn("rank score test: Q_n ill conditioned, using pseudo-inverse");
    Vector inv = es.eigenvalues().unaryExpr([lmax](double v) {
      return (v > lmax * 1e-10) ? 1.0 / v : 0.0;
    });
    Matrix qinv =
        es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    rs = S.dot(qinv * S);
  } else {
    rs = S.dot(Q.llt().solve(S));
  }

  RankScoreResult result;
  result.statistic = std::max(rs, 0.0);
  result.df = static_cast<int>(tested.cols());
  result.bandwidth = sw.bandwidth;
  return result;
}

void finish_result(RankScoreResult& result, int k_n, Eigen::Index n,
                   ReferenceMode mode) {
  bool use_normal = false;
  if (mode == ReferenceMode::normal_approx) {
    use_normal = true;
  } else if (mode == ReferenceMode::automatic) {
    use_normal = static_cast<double>(k_n) >
                 std::pow(static_cast<double>(n), 0.2);
  }
  if (use_normal) {
    result.reference = ReferenceDist::normal_approx;
    result.statistic = (result.statistic - result.df) /
                       std::sqrt(2.0 * static_cast<double>(result.df));
  } else {
    result.reference = ReferenceDist::chi_square;
  }
  result.p_value = reference_pvalue(result.statistic, result.df, result.reference);
  for (double level : {0.01, 0.05, 0.10}) {
    result.reject_at[level] = result.p_value < level;
  }
}

IvqrConfig aligned_config(const RankTestConfig& config, const SplineBasis& basis) {
  IvqrConfig out = config.base;
  out.k_n = basis.interior_knot_count;
  out.degree = basis.degree;
  return out;
}

}  // namespace

RankScoreResult rs_beta_test(const Dataset& dataset, const SplineBasis& basis,
                             const std::vector<int>& tested_x_cols,
                             const RankTestConfig& config) {
  dataset.validate();
  validate_partition(tested_x_cols, static_cast<int>(dataset.p()), "rs_beta_test");

  const Vector D = spatial_lag(dataset.W, dataset.y);
  Matrix X1 = select_columns(dataset.X, tested_x_cols);
  std::vector<int> keep =
      complement_of(tested_x_cols, static_cast<int>(dataset.p()));
  Matrix X2 = select_columns(dataset.X, keep);

  Dataset null_ds{dataset.y, X2, dataset.Zstar, dataset.U, dataset.W};
  IvqrConfig cfg = aligned_config(config, basis);

  VaryingCoefBlock pi;
  if (dataset.q() > 0) {
    pi = build_pi(dataset.Zstar, dataset.U, basis);
  } else {
    pi.pi_matrix.resize(dataset.n(), 0);
  }

  double rho_hat;
  Vector beta2, theta;
  if (config.estimator == NullEstimator::ivqr) {
    IvqrEstimate fit = estimate(null_ds, cfg);
    rho_hat = fit.rho_hat;
    beta2 = fit.beta_hat;
    theta = fit.theta_hat;
  } else {
    IvqrEstimate fit = estimate_naive_qr(null_ds, cfg);
    rho_hat = fit.rho_hat;
    beta2 = fit.beta_hat;
    theta = fit.theta_hat;
  }

  Vector resid = dataset.y - rho_hat * D;
  if (X2.cols() > 0) resid -= X2 * beta2;
  if (pi.q_kn > 0) resid -= pi.pi_matrix * theta;

  Matrix retained(dataset.n(), 1 + X2.cols() + pi.q_kn);
  retained.col(0) = D;
  if (X2.cols() > 0) retained.middleCols(1, X2.cols()) = X2;
  if (pi.q_kn > 0) retained.rightCols(pi.q_kn) = pi.pi_matrix;

  RankScoreResult result =
      rank_score_statistic(retained, X1, resid, cfg.tau, config);
  // The non-varying-coefficient test keeps its chi-square reference for any
  // knot count.
  finish_result(result, 0, dataset.n(),
                config.reference == ReferenceMode::automatic
                    ? ReferenceMode::chi_square
                    : config.reference);
  return result;
}

RankScoreResult rs_constancy_test(const Dataset& dataset, const SplineBasis& basis,
                                  const std::vector<int>& tested_z_cols,
                                  const RankTestConfig& config) {
  dataset.validate();
  validate_partition(tested_z_cols, static_cast<int>(dataset.q()),
                     "rs_constancy_test");

  Matrix Z1 = select_columns(dataset.Zstar, tested_z_cols);
  for (Eigen::Index j = 0; j < Z1.cols(); ++j) {
    if (Z1.col(j).cwiseAbs().maxCoeff() == 0.0) {
      throw singular_matrix_error(
          "rs_constancy_test: tested column is identically zero, Q_n would be "
          "singular");
    }
  }
  std::vector<int> keep =
      complement_of(tested_z_cols, static_cast<int>(dataset.q()));
  Matrix Z2 = select_columns(dataset.Zstar, keep);

  const Eigen::Index n = dataset.n();
  const Eigen::Index p = dataset.p();
  const Vector D = spatial_lag(dataset.W, dataset.y);
  IvqrConfig cfg = aligned_config(config, basis);

  VaryingCoefBlock pi2;
  if (Z2.cols() > 0) {
    pi2 = build_pi(Z2, dataset.U, basis);
  } else {
    pi2.pi_matrix.resize(n, 0);
  }

  // Step 1: joint null fit with the tested columns entering linearly.
  Matrix X_aug(n, p + Z1.cols());
  if (p > 0) X_aug.leftCols(p) = dataset.X;
  X_aug.rightCols(Z1.cols()) = Z1;
  Dataset aug_ds{dataset.y, X_aug, Z2, dataset.U, dataset.W};

  double rho1;
  Vector beta1, gamma1, theta1;
  if (config.estimator == NullEstimator::ivqr) {
    IvqrEstimate fit = estimate(aug_ds, cfg);
    rho1 = fit.rho_hat;
    beta1 = fit.beta_hat.head(p);
    gamma1 = fit.beta_hat.tail(Z1.cols());
    theta1 = fit.theta_hat;
  } else {
    IvqrEstimate fit = estimate_naive_qr(aug_ds, cfg);
    rho1 = fit.rho_hat;
    beta1 = fit.beta_hat.head(p);
    gamma1 = fit.beta_hat.tail(Z1.cols());
    theta1 = fit.theta_hat;
  }

  Vector resid;
  if (config.constancy_residuals == ConstancyResiduals::step1_joint) {
    resid = dataset.y - rho1 * D - Z1 * gamma1;
    if (p > 0) resid -= dataset.X * beta1;
    if (pi2.q_kn > 0) resid -= pi2.pi_matrix * theta1;
  } else {
    // Step-2 wiring: refit the reduced model on the adjusted response and
    // take its residuals; the spatial lag stays the one computed from the
    // original response.
    Vector y2 = dataset.y - Z1 * gamma1;
    if (config.estimator == NullEstimator::ivqr) {
      Dataset red_ds{y2, dataset.X, Z2, dataset.U, dataset.W};
      AssembledDesign design2 = assemble_design(red_ds, basis, cfg.instruments);
      design2.D = D;
      IvqrEstimate fit2 = estimate_on_design(y2, design2, basis, cfg);
      resid = y2 - fit2.rho_hat * D;
      if (p > 0) resid -= dataset.X * fit2.beta_hat;
      if (pi2.q_kn > 0) resid -= pi2.pi_matrix * fit2.theta_hat;
    } else {
      Matrix breve(n, 1 + p + pi2.q_kn);
      breve.col(0) = D;
      if (p > 0) breve.middleCols(1, p) = dataset.X;
      if (pi2.q_kn > 0) breve.rightCols(pi2.q_kn) = pi2.pi_matrix;
      QrDesign qd(breve, cfg.solver);
      QrFit fit2 = qd.solve(y2, cfg.tau);
      resid = y2 - breve * fit2.coefficients;
    }
  }

  // The retained block is everything the null model fits, the tested block
  // is the departure-from-constancy direction of each tested covariate
  // (its interaction with the smoothing variable). The null fit makes the
  // scores orthogonal to Z1 itself, so Z1 cannot carry the test; the
  // interaction score keeps q1 degrees of freedom.
  Matrix retained(n, 1 + p + Z1.cols() + pi2.q_kn);
  retained.col(0) = D;
  if (p > 0) retained.middleCols(1, p) = dataset.X;
  retained.middleCols(1 + p, Z1.cols()) = Z1;
  if (pi2.q_kn > 0) retained.rightCols(pi2.q_kn) = pi2.pi_matrix;

  Matrix tested = Z1.array().colwise() * dataset.U.array();

  RankScoreResult result =
      rank_score_statistic(retained, tested, resid, cfg.tau, config);
  finish_result(result, basis.interior_knot_count, n, config.reference);
  return result;
}

ConstancyStep2 constancy_step2_refit(const Dataset& dataset,
                                     const SplineBasis& basis,
                                     const std::vector<int>& tested_z_cols,
                                     const Vector& gamma1_hat,
                                     const RankTestConfig& config) {
  dataset.validate();
  validate_partition(tested_z_cols, static_cast<int>(dataset.q()),
                     "constancy_step2_refit");
  Matrix Z1 = select_columns(dataset.Zstar, tested_z_cols);
  if (gamma1_hat.size() != Z1.cols()) {
    throw parameter_error("constancy_step2_refit: gamma1 length mismatch");
  }
  std::vector<int> keep =
      complement_of(tested_z_cols, static_cast<int>(dataset.q()));
  Matrix Z2 = select_columns(dataset.Zstar, keep);

  const Vector D = spatial_lag(dataset.W, dataset.y);
  IvqrConfig cfg = aligned_config(config, basis);
  Vector y2 = dataset.y - Z1 * gamma1_hat;

  ConstancyStep2 out;
  if (config.estimator == NullEstimator::ivqr) {
    Dataset red_ds{y2, dataset.X, Z2, dataset.U, dataset.W};
    AssembledDesign design2 = assemble_design(red_ds, basis, cfg.instruments);
    design2.D = D;
    IvqrEstimate fit = estimate_on_design(y2, design2, basis, cfg);
    out.rho = fit.rho_hat;
    out.beta = fit.beta_hat;
    out.theta2 = fit.theta_hat;
    out.objective = fit.objective;
  } else {
    const Eigen::Index n = dataset.n();
    const Eigen::Index p = dataset.p();
    VaryingCoefBlock pi2;
    if (Z2.cols() > 0) {
      pi2 = build_pi(Z2, dataset.U, basis);
    } else {
      pi2.pi_matrix.resize(n, 0);
    }
    Matrix breve(n, 1 + p + pi2.q_kn);
    breve.col(0) = D;
    if (p > 0) breve.middleCols(1, p) = dataset.X;
    if (pi2.q_kn > 0) breve.rightCols(pi2.q_kn) = pi2.pi_matrix;
    QrDesign qd(breve, cfg.solver);
    QrFit fit = qd.solve(y2, cfg.tau);
    out.rho = fit.coefficients(0);
    out.beta = fit.coefficients.segment(1, p);
    out.theta2 = fit.coefficients.tail(pi2.q_kn);
    out.objective = fit.objective;
  }
  return out;
}

}  // namespace plvcsar
