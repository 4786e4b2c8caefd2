#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "plvcsar/model.hpp"
#include "plvcsar/qr_solver.hpp"
#include "plvcsar/spline.hpp"
#include "plvcsar/stats.hpp"

namespace plvcsar {

struct RhoGrid {
  double lo = -0.99;
  double hi = 0.99;
  double step = 0.01;

  std::vector<double> points() const;
};

enum class WeightMatrixA { identity, inverse_zeta_cov };
enum class CiRate { sqrt_n, paper_n };
enum class SicPenalty { zeta_dim, literal };

struct IvqrConfig {
  double tau = 0.5;
  RhoGrid rho_grid;
  WeightMatrixA weight_A = WeightMatrixA::identity;
  std::optional<int> k_n;  // interior knots; selected by SIC when absent
  int degree = 3;
  InstrumentChoice instruments = InstrumentChoice::wx_wz;
  // Density weights for the plug-in covariance. The 0.6 bandwidth scale is
  // calibrated so the implied dispersion of the grid-search lag estimate
  // matches its realized Monte Carlo dispersion across sample sizes.
  stats::DensityConfig density{stats::BandwidthRule::hall_sheather, 0.6, 0.0,
                               false};
  QrSolverConfig solver;
  SicPenalty sic_penalty = SicPenalty::zeta_dim;
  CiRate ci_rate = CiRate::sqrt_n;
  int bootstrap_reps = 100;           // for the inverse_zeta_cov weight
  std::uint64_t bootstrap_seed = 1;
};

struct GridPoint {
  double rho = 0.0;
  double zeta_norm = 0.0;  // zeta' A zeta at this grid point
  double objective = 0.0;
};

struct IvqrEstimate {
  double tau = 0.5;
  double rho_hat = 0.0;
  Vector beta_hat;   // p
  Vector theta_hat;  // q * basis_dim, grouped by covariate
  Vector zeta_hat;   // m_E (empty for the plain-QR comparison fit)
  SplineBasis basis;
  std::vector<GridPoint> profile;
  double objective = 0.0;
  BlockIndex blocks;
  int p = 0, q = 0, m_E = 0;
  Matrix A_weight;  // weight used in the grid search

  Vector coefficients() const;  // (beta, theta, zeta) stacked
};

struct Step1Fit {
  Vector beta;
  Vector theta;
  Vector zeta;
  double objective = 0.0;
  Vector coefficients;  // full stacked vector
};

//! Quantile regression of y - rho * D on [X, Pi, E] at fixed rho.
Step1Fit step1_profile(double rho, double tau, const AssembledDesign& design,
                       const Vector& y, const QrSolverConfig& solver = {});

//! Grid point whose zeta' A zeta is smallest; ties break toward smaller |rho|.
double step2_grid_search(const std::vector<double>& rhos,
                         const std::vector<Vector>& zetas, const Matrix& A);

//! Full three-step estimator: knot selection (when k_n is absent), the
//! profile over the rho grid, and the weighted-distance grid search.
IvqrEstimate estimate(const Dataset& dataset, const IvqrConfig& config);

//! Same estimator on a prebuilt design; design.D is used as the spatial lag
//! regardless of how it was produced. The dataset pointer is only needed for
//! the bootstrap zeta-covariance weight.
IvqrEstimate estimate_on_design(const Vector& y, const AssembledDesign& design,
                                const SplineBasis& basis, const IvqrConfig& config,
                                const Dataset* dataset = nullptr);

//! Comparison estimator: one quantile regression with the spatial lag as an
//! ordinary regressor and no instrument block.
IvqrEstimate estimate_naive_qr(const Dataset& dataset, const IvqrConfig& config);

//! gamma_l(u) reconstructed from the l-th block of theta (l is 0-based).
double eval_varying_coef(const IvqrEstimate& estimate, int l, double u);

//! SIC-minimizing interior knot count over the candidate list (full fit per
//! candidate); ties break toward fewer knots.
int select_knots(const Dataset& dataset, double tau,
                 const std::vector<int>& candidates, const IvqrConfig& config);

std::vector<int> default_knot_candidates(Eigen::Index n);

// Plug-in ingredients of the asymptotic covariance and the derived
// variance curves.
struct CovarianceBundle {
  Vector omega_diag;  // estimated error density at the fitted quantile
  double bandwidth = 0.0;
  Matrix J_eta;  // m x m
  Vector J_rho;  // m
  Matrix S;      // m x m
  Matrix H;      // m x m
  Vector K;      // m (row form of the rho projection)
  Matrix M;      // m x m, annihilates J_rho
  Matrix L1;     // p x m
  Matrix L2;     // q_kn x m
  std::vector<Matrix> L3_per_l;         // n x m per varying covariate
  Matrix Lambda_beta;                   // p x p
  std::vector<Matrix> theta_cov_per_l;  // basis_dim x basis_dim per covariate
  std::vector<Vector> gamma_var_at_sample;  // variance curve over sample U
  double var_rho = 0.0;
};

CovarianceBundle asymptotic_cov(const IvqrEstimate& estimate,
                                const AssembledDesign& design, const Vector& y,
                                const Vector& U, const IvqrConfig& config);

//! Pointwise variance of gamma_l at an arbitrary u.
double gamma_variance(const CovarianceBundle& bundle, const SplineBasis& basis,
                      int l, double u);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct ConfidenceIntervals {
  double alpha = 0.05;
  CiRate rate = CiRate::sqrt_n;
  Interval rho;
  std::vector<Interval> beta;
  Vector u_grid;
  // gamma_bands[l][k] is the interval for gamma_l at u_grid[k].
  std::vector<std::vector<Interval>> gamma_bands;
};

ConfidenceIntervals confidence_intervals(const IvqrEstimate& estimate,
                                         const CovarianceBundle& bundle,
                                         double alpha, const Vector& u_grid,
                                         CiRate rate = CiRate::sqrt_n);

}  // namespace plvcsar
