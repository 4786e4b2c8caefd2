#pragma once

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "plvcsar/ivqr.hpp"
#include "plvcsar/model.hpp"
#include "plvcsar/stats.hpp"

namespace plvcsar {

enum class ReferenceDist { chi_square, normal_approx };

struct RankScoreResult {
  double statistic = 0.0;
  int df = 0;
  ReferenceDist reference = ReferenceDist::chi_square;
  double p_value = 1.0;
  std::map<double, bool> reject_at;  // significance level -> decision
  double bandwidth = 0.0;            // bandwidth behind the B weights
};

struct SparsityWeights {
  Vector B_diag;  // per-observation density-at-zero estimate, floored
  double bandwidth = 0.0;
};

//! Density-at-zero weights for the null-fit residuals; entries are floored
//! at 1e-8 (with a warning) so the projection stays well defined.
SparsityWeights estimate_sparsity(const Vector& residuals, double tau,
                                  const stats::DensityConfig& config);

enum class NullEstimator { ivqr, naive_qr };
enum class ConstancyResiduals { step1_joint, step2_refit };
enum class ReferenceMode { automatic, chi_square, normal_approx };

struct RankTestConfig {
  NullEstimator estimator = NullEstimator::ivqr;
  // The tested block is premultiplied by B^(1/2) before the projection, so
  // the same weighting appears on both sides of the quadratic form. The
  // unweighted variant is kept for sensitivity checks; it deflates the
  // statistic noticeably in the constancy test.
  bool weighted_tested_block = true;
  ConstancyResiduals constancy_residuals = ConstancyResiduals::step1_joint;
  ReferenceMode reference = ReferenceMode::automatic;
  // Density weights behind the B matrix. The averaged (homoscedastic) mode
  // keeps power under alternatives, where per-observation kernel weights
  // collapse on exactly the informative large residuals.
  stats::DensityConfig sparsity{stats::BandwidthRule::hall_sheather, 1.0, 0.0,
                                true};
  IvqrConfig base;  // tau, grid, solver settings for the null fits
};

//! Rank score test of H0: the coefficients on the listed X columns are zero.
//! The null model drops those columns; the score of the tested block is
//! projected off the retained design with density weights.
RankScoreResult rs_beta_test(const Dataset& dataset, const SplineBasis& basis,
                             const std::vector<int>& tested_x_cols,
                             const RankTestConfig& config);

//! Rank score test of H0: the listed varying coefficients are constant.
//! The null model carries those Z columns with constant coefficients; the
//! statistic scores the departure-from-constancy direction (each tested
//! column interacted with the smoothing variable) against the null fit.
RankScoreResult rs_constancy_test(const Dataset& dataset, const SplineBasis& basis,
                                  const std::vector<int>& tested_z_cols,
                                  const RankTestConfig& config);

// Follow-up refit of the non-tested varying coefficients on the response
// with the fitted constant part removed. Diagnostic companion to the
// constancy test; the statistic itself does not depend on it.
struct ConstancyStep2 {
  double rho = 0.0;
  Vector beta;
  Vector theta2;
  double objective = 0.0;
};

ConstancyStep2 constancy_step2_refit(const Dataset& dataset,
                                     const SplineBasis& basis,
                                     const std::vector<int>& tested_z_cols,
                                     const Vector& gamma1_hat,
                                     const RankTestConfig& config);

//! Upper-tail probability under the stated reference distribution.
double reference_pvalue(double statistic, int df, ReferenceDist reference);

}  // namespace plvcsar
