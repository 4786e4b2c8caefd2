#include "plvcsar/ivqr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "plvcsar/errors.hpp"
#include "plvcsar/log.hpp"
#include "plvcsar/rng.hpp"

namespace plvcsar {

std::vector<double> RhoGrid::points() const {
  if (!(lo < hi) || !(lo > -1.0) || !(hi < 1.0)) {
    throw parameter_error("RhoGrid: require -1 < lo < hi < 1");
  }
  if (!(step > 0.0)) throw parameter_error("RhoGrid: step must be positive");
  std::vector<double> pts;
  const int count = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
  pts.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    double v = lo + static_cast<double>(k) * step;
    if (v > hi + 1e-12) break;
    pts.push_back(std::min(v, hi));
  }
  return pts;
}

Vector IvqrEstimate::coefficients() const {
  Vector out(beta_hat.size() + theta_hat.size() + zeta_hat.size());
  out << beta_hat, theta_hat, zeta_hat;
  return out;
}

namespace {

struct SplitFit {
  Vector beta, theta, zeta;
};

SplitFit split_coefficients(const Vector& coef, const BlockIndex& blocks) {
  SplitFit s;
  s.beta = coef.segment(blocks.x_begin, blocks.x_count);
  s.theta = coef.segment(blocks.pi_begin, blocks.pi_count);
  s.zeta = coef.segment(blocks.e_begin, blocks.e_count);
  return s;
}

}  // namespace

Step1Fit step1_profile(double rho, double tau, const AssembledDesign& design,
                       const Vector& y, const QrSolverConfig& solver) {
  if (!(std::fabs(rho) < 1.0)) {
    throw parameter_error("step1_profile: require |rho| < 1");
  }
  QrDesign qd(design.X_tilde, solver);
  QrFit fit = qd.solve(y - rho * design.D, tau);
  Step1Fit out;
  SplitFit s = split_coefficients(fit.coefficients, design.blocks);
  out.beta = std::move(s.beta);
  out.theta = std::move(s.theta);
  out.zeta = std::move(s.zeta);
  out.objective = fit.objective;
  out.coefficients = std::move(fit.coefficients);
  return out;
}

double step2_grid_search(const std::vector<double>& rhos,
                         const std::vector<Vector>& zetas, const Matrix& A) {
  if (rhos.empty() || rhos.size() != zetas.size()) {
    throw parameter_error("step2_grid_search: empty or inconsistent profile");
  }
  std::size_t best = 0;
  double best_norm = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < rhos.size(); ++j) {
    double norm = zetas[j].dot(A * zetas[j]);
    if (norm < best_norm ||
        (norm == best_norm && std::fabs(rhos[j]) < std::fabs(rhos[best]))) {
      best = j;
      best_norm = norm;
    }
  }
  return rhos[best];
}

namespace {

struct ProfileScan {
  std::vector<double> rhos;
  std::vector<Vector> zetas;
  std::vector<double> objectives;
  std::vector<Vector> coefficients;
};

ProfileScan scan_rho_grid(const Vector& y, const AssembledDesign& design,
                          const QrDesign& qd, const IvqrConfig& config) {
  ProfileScan scan;
  scan.rhos = config.rho_grid.points();
  const std::size_t J = scan.rhos.size();
  scan.zetas.resize(J);
  scan.objectives.resize(J);
  scan.coefficients.resize(J);
  Vector warm;
  for (std::size_t j = 0; j < J; ++j) {
    Vector response = y - scan.rhos[j] * design.D;
    QrFit fit = qd.solve(response, config.tau, warm.size() ? &warm : nullptr);
    warm = fit.coefficients;
    scan.zetas[j] =
        fit.coefficients.segment(design.blocks.e_begin, design.blocks.e_count);
    scan.objectives[j] = fit.objective;
    scan.coefficients[j] = std::move(fit.coefficients);
  }
  return scan;
}

IvqrEstimate finish_estimate(const ProfileScan& scan, const Matrix& A,
                             const AssembledDesign& design,
                             const SplineBasis& basis, const IvqrConfig& config) {
  const std::size_t J = scan.rhos.size();
  std::size_t best = 0;
  double best_norm = std::numeric_limits<double>::infinity();
  IvqrEstimate est;
  est.profile.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    double norm = scan.zetas[j].dot(A * scan.zetas[j]);
    est.profile[j] = GridPoint{scan.rhos[j], norm, scan.objectives[j]};
    if (norm < best_norm ||
        (norm == best_norm &&
         std::fabs(scan.rhos[j]) < std::fabs(scan.rhos[best]))) {
      best = j;
      best_norm = norm;
    }
  }
  est.tau = config.tau;
  est.rho_hat = scan.rhos[best];
  SplitFit s = split_coefficients(scan.coefficients[best], design.blocks);
  est.beta_hat = std::move(s.beta);
  est.theta_hat = std::move(s.theta);
  est.zeta_hat = std::move(s.zeta);
  est.basis = basis;
  est.objective = scan.objectives[best];
  est.blocks = design.blocks;
  est.p = design.blocks.x_count;
  est.m_E = design.blocks.e_count;
  est.q = (basis.basis_dim() > 0) ? design.blocks.pi_count / basis.basis_dim() : 0;
  est.A_weight = A;
  return est;
}

Matrix bootstrap_zeta_weight(const Dataset& dataset, const AssembledDesign& design,
                             const SplineBasis& basis, const QrDesign& qd,
                             const IvqrConfig& config) {
  // Preliminary identity-weight pass fixes rho; the weight is then the
  // inverse covariance of zeta refits on resampled-residual responses.
  IvqrConfig prelim_cfg = config;
  prelim_cfg.weight_A = WeightMatrixA::identity;
  ProfileScan scan = scan_rho_grid(dataset.y, design, qd, prelim_cfg);
  Matrix identity = Matrix::Identity(design.blocks.e_count, design.blocks.e_count);
  IvqrEstimate prelim =
      finish_estimate(scan, identity, design, basis, prelim_cfg);

  const Eigen::Index n = dataset.n();
  const int m_e = design.blocks.e_count;
  const Vector coef = prelim.coefficients();
  const Vector fitted_all = design.X_tilde * coef;
  const Vector resid = dataset.y - prelim.rho_hat * design.D - fitted_all;
  const Eigen::Index lead_cols = design.blocks.e_begin;
  const Vector structural =
      design.X_tilde.leftCols(lead_cols) * coef.head(lead_cols);

  Matrix solve_lhs = Matrix::Identity(n, n) - prelim.rho_hat * dataset.W;
  Eigen::PartialPivLU<Matrix> lu(solve_lhs);

  const int B = std::max(10, config.bootstrap_reps);
  Matrix zeta_draws(B, m_e);
  Vector eps(n), ystar(n), response(n);
  for (int b = 0; b < B; ++b) {
    Rng rng(config.bootstrap_seed + static_cast<std::uint64_t>(b));
    for (Eigen::Index i = 0; i < n; ++i) {
      eps(i) = resid(static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(n))));
    }
    ystar = lu.solve(structural + eps);
    response = ystar - prelim.rho_hat * (dataset.W * ystar);
    QrFit fit = qd.solve(response, config.tau);
    zeta_draws.row(b) =
        fit.coefficients.segment(design.blocks.e_begin, m_e).transpose();
  }
  Matrix centered = zeta_draws.rowwise() - zeta_draws.colwise().mean();
  Matrix cov = centered.transpose() * centered / static_cast<double>(B - 1);
  double ridge = 1e-8 * cov.trace() / static_cast<double>(m_e) + 1e-12;
  cov += ridge * Matrix::Identity(m_e, m_e);
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    warn("bootstrap zeta covariance not positive definite; using identity weight");
    return Matrix::Identity(m_e, m_e);
  }
  return llt.solve(Matrix::Identity(m_e, m_e));
}

}  // namespace

IvqrEstimate estimate_on_design(const Vector& y, const AssembledDesign& design,
                                const SplineBasis& basis, const IvqrConfig& config,
                                const Dataset* dataset) {
  if (!(config.tau > 0.0 && config.tau < 1.0)) {
    throw parameter_error("estimate: tau must lie in (0, 1)");
  }
  if (design.m() + 1 >= design.n()) {
    std::ostringstream msg;
    msg << "estimate: design has " << design.m() << " columns for " << design.n()
        << " observations; reduce k_n";
    throw parameter_error(msg.str());
  }
  QrDesign qd(design.X_tilde, config.solver);

  Matrix A;
  if (config.weight_A == WeightMatrixA::inverse_zeta_cov) {
    if (dataset == nullptr) {
      warn("inverse_zeta_cov weight requires the dataset; using identity");
      A = Matrix::Identity(design.blocks.e_count, design.blocks.e_count);
    } else {
      A = bootstrap_zeta_weight(*dataset, design, basis, qd, config);
    }
  } else {
    A = Matrix::Identity(design.blocks.e_count, design.blocks.e_count);
  }

  ProfileScan scan = scan_rho_grid(y, design, qd, config);
  return finish_estimate(scan, A, design, basis, config);
}

IvqrEstimate estimate(const Dataset& dataset, const IvqrConfig& config) {
  dataset.validate();
  int k = config.k_n.value_or(-1);
  if (k < 0) {
    k = select_knots(dataset, config.tau, default_knot_candidates(dataset.n()),
                     config);
  }
  SplineBasis basis = make_knots(dataset.U, k, config.degree);
  AssembledDesign design = assemble_design(dataset, basis, config.instruments);
  return estimate_on_design(dataset.y, design, basis, config, &dataset);
}

IvqrEstimate estimate_naive_qr(const Dataset& dataset, const IvqrConfig& config) {
  dataset.validate();
  if (!(config.tau > 0.0 && config.tau < 1.0)) {
    throw parameter_error("estimate_naive_qr: tau must lie in (0, 1)");
  }
  int k = config.k_n.value_or(-1);
  if (k < 0) {
    k = select_knots(dataset, config.tau, default_knot_candidates(dataset.n()),
                     config);
  }
  SplineBasis basis = make_knots(dataset.U, k, config.degree);

  const Eigen::Index n = dataset.n();
  const Eigen::Index p = dataset.p();
  VaryingCoefBlock pi;
  if (dataset.q() > 0) {
    pi = build_pi(dataset.Zstar, dataset.U, basis);
  } else {
    pi.pi_matrix.resize(n, 0);
  }
  Vector D = spatial_lag(dataset.W, dataset.y);
  Matrix design(n, 1 + p + pi.q_kn);
  design.col(0) = D;
  if (p > 0) design.middleCols(1, p) = dataset.X;
  if (pi.q_kn > 0) design.rightCols(pi.q_kn) = pi.pi_matrix;

  QrDesign qd(design, config.solver);
  QrFit fit = qd.solve(dataset.y, config.tau);

  IvqrEstimate est;
  est.tau = config.tau;
  est.rho_hat = fit.coefficients(0);
  est.beta_hat = fit.coefficients.segment(1, p);
  est.theta_hat = fit.coefficients.segment(1 + p, pi.q_kn);
  est.zeta_hat = Vector(0);
  est.basis = basis;
  est.objective = fit.objective;
  est.blocks = BlockIndex{1, static_cast<int>(p), static_cast<int>(1 + p),
                          pi.q_kn, static_cast<int>(1 + p) + pi.q_kn, 0};
  est.p = static_cast<int>(p);
  est.q = static_cast<int>(dataset.q());
  est.m_E = 0;
  est.A_weight = Matrix(0, 0);
  return est;
}

double eval_varying_coef(const IvqrEstimate& estimate, int l, double u) {
  const int nb = estimate.basis.basis_dim();
  if (l < 0 || nb <= 0 || (l + 1) * nb > estimate.theta_hat.size()) {
    throw parameter_error("eval_varying_coef: covariate index out of range");
  }
  Vector pi = eval_basis(u, estimate.basis);
  return pi.dot(estimate.theta_hat.segment(static_cast<Eigen::Index>(l) * nb, nb));
}

std::vector<int> default_knot_candidates(Eigen::Index n) {
  int top = static_cast<int>(std::ceil(std::pow(static_cast<double>(n), 0.25)));
  std::vector<int> grid;
  for (int k = 0; k <= top; ++k) grid.push_back(k);
  return grid;
}

int select_knots(const Dataset& dataset, double tau,
                 const std::vector<int>& candidates, const IvqrConfig& config) {
  if (candidates.empty()) {
    throw parameter_error("select_knots: empty candidate list");
  }
  dataset.validate();
  const int n = static_cast<int>(dataset.n());
  const int p = static_cast<int>(dataset.p());
  const int q = static_cast<int>(dataset.q());

  int best_k = -1;
  double best_sic = std::numeric_limits<double>::infinity();
  for (int k : candidates) {
    if (k < 0) continue;
    int q_kn = q * (k + config.degree + 1);
    if (q_kn + p + 2 >= n) continue;  // infeasible candidate
    IvqrConfig sub = config;
    sub.tau = tau;
    sub.k_n = k;
    double value;
    try {
      IvqrEstimate fit = estimate(dataset, sub);
      int count = (config.sic_penalty == SicPenalty::literal)
                      ? 2 + p + q_kn
                      : 1 + p + q_kn + fit.m_E;
      value = sic_penalized(fit.objective, n, count);
    } catch (const error&) {
      continue;  // candidate failed (rank problems at high k_n); skip it
    }
    if (value < best_sic - 1e-12 ||
        (std::fabs(value - best_sic) <= 1e-12 && best_k >= 0 && k < best_k)) {
      best_sic = value;
      best_k = k;
    }
  }
  if (best_k < 0) {
    throw parameter_error("select_knots: no feasible knot candidate");
  }
  return best_k;
}

CovarianceBundle asymptotic_cov(const IvqrEstimate& estimate,
                                const AssembledDesign& design, const Vector& y,
                                const Vector& U, const IvqrConfig& config) {
  const Eigen::Index n = design.n();
  const Eigen::Index m = design.m();
  const int p = design.blocks.x_count;
  const int q_kn = design.blocks.pi_count;
  const int m_e = design.blocks.e_count;
  const int nb = estimate.basis.basis_dim();
  const int q = nb > 0 ? q_kn / nb : 0;
  const double tau = estimate.tau;

  CovarianceBundle bundle;
  Vector coef = estimate.coefficients();
  if (coef.size() != m || y.size() != n || U.size() != n) {
    throw data_error("asymptotic_cov: estimate does not match the design");
  }
  Vector resid = y - estimate.rho_hat * design.D - design.X_tilde * coef;
  stats::DensityWeights dens = stats::density_at_zero(resid, tau, config.density);
  bundle.omega_diag = dens.values;
  bundle.bandwidth = dens.bandwidth;

  const Matrix& Xt = design.X_tilde;
  Matrix XtOmega = Xt.transpose() * bundle.omega_diag.asDiagonal();
  bundle.J_eta = (XtOmega * Xt) / static_cast<double>(n);
  bundle.J_eta = 0.5 * (bundle.J_eta + bundle.J_eta.transpose()).eval();
  bundle.J_rho = (XtOmega * design.D) / static_cast<double>(n);
  bundle.S = tau * (1.0 - tau) / static_cast<double>(n) * (Xt.transpose() * Xt);

  Eigen::LLT<Matrix> llt(bundle.J_eta);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(bundle.J_eta);
    std::ostringstream msg;
    msg << "asymptotic_cov: J_eta is numerically singular (eigenvalue range ["
        << es.eigenvalues().minCoeff() << ", " << es.eigenvalues().maxCoeff()
        << "])";
    throw singular_matrix_error(msg.str());
  }
  Matrix Jinv = llt.solve(Matrix::Identity(m, m));

  Matrix Jbar_beta = Jinv.middleRows(design.blocks.x_begin, p);
  Matrix Jbar_theta = Jinv.middleRows(design.blocks.pi_begin, q_kn);
  Matrix Jbar_zeta = Jinv.middleRows(design.blocks.e_begin, m_e);

  Matrix A = estimate.A_weight;
  if (A.rows() != m_e || A.cols() != m_e) {
    A = Matrix::Identity(m_e, m_e);
  }
  bundle.H = Jbar_zeta.transpose() * A * Jbar_zeta;

  Vector hjr = bundle.H * bundle.J_rho;
  double denom = bundle.J_rho.dot(hjr);
  if (!(denom > 0.0) || !std::isfinite(denom)) {
    throw singular_matrix_error(
        "asymptotic_cov: J_rho' H J_rho is not positive");
  }
  bundle.K = hjr / denom;
  bundle.M = Matrix::Identity(m, m) - bundle.J_rho * bundle.K.transpose();
  bundle.L1 = Jbar_beta * bundle.M;
  bundle.L2 = Jbar_theta * bundle.M;
  bundle.Lambda_beta = bundle.L1 * bundle.S * bundle.L1.transpose();
  bundle.var_rho = bundle.K.dot(bundle.S * bundle.K);

  bundle.L3_per_l.reserve(static_cast<std::size_t>(q));
  bundle.theta_cov_per_l.reserve(static_cast<std::size_t>(q));
  bundle.gamma_var_at_sample.reserve(static_cast<std::size_t>(q));
  for (int l = 0; l < q; ++l) {
    Matrix L2_l = bundle.L2.middleRows(static_cast<Eigen::Index>(l) * nb, nb);
    Matrix Pi_l = Xt.middleCols(design.blocks.pi_begin +
                                    static_cast<Eigen::Index>(l) * nb, nb);
    bundle.L3_per_l.push_back(Pi_l * L2_l);
    Matrix V_l = L2_l * bundle.S * L2_l.transpose();
    bundle.theta_cov_per_l.push_back(V_l);
    // Variance curve of gamma_l over the sample smoothing values.
    Vector curve(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      Vector pi = eval_basis(U(i), estimate.basis);
      curve(i) = pi.dot(V_l * pi);
    }
    bundle.gamma_var_at_sample.push_back(curve);
  }

  return bundle;
}

double gamma_variance(const CovarianceBundle& bundle, const SplineBasis& basis,
                      int l, double u) {
  if (l < 0 || static_cast<std::size_t>(l) >= bundle.theta_cov_per_l.size()) {
    throw parameter_error("gamma_variance: covariate index out of range");
  }
  Vector pi = eval_basis(u, basis);
  return pi.dot(bundle.theta_cov_per_l[static_cast<std::size_t>(l)] * pi);
}

ConfidenceIntervals confidence_intervals(const IvqrEstimate& estimate,
                                         const CovarianceBundle& bundle,
                                         double alpha, const Vector& u_grid,
                                         CiRate rate) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw parameter_error("confidence_intervals: alpha must lie in (0, 1]");
  }
  const double z = (alpha >= 1.0) ? 0.0 : stats::norm_quantile(1.0 - 0.5 * alpha);
  // The sqrt(n) denominator matches the root-n limit theorem; paper_n keeps
  // the literal 1/n scaling for comparison runs.
  const double nn = static_cast<double>(bundle.omega_diag.size());
  const double denom = (rate == CiRate::sqrt_n) ? std::sqrt(nn) : nn;

  ConfidenceIntervals ci;
  ci.alpha = alpha;
  ci.rate = rate;
  ci.u_grid = u_grid;

  double half_rho = z * std::sqrt(std::max(0.0, bundle.var_rho)) / denom;
  ci.rho = Interval{estimate.rho_hat - half_rho, estimate.rho_hat + half_rho};

  ci.beta.resize(static_cast<std::size_t>(estimate.beta_hat.size()));
  for (Eigen::Index j = 0; j < estimate.beta_hat.size(); ++j) {
    double half = z * std::sqrt(std::max(0.0, bundle.Lambda_beta(j, j))) / denom;
    ci.beta[static_cast<std::size_t>(j)] =
        Interval{estimate.beta_hat(j) - half, estimate.beta_hat(j) + half};
  }

  ci.gamma_bands.resize(bundle.theta_cov_per_l.size());
  for (std::size_t l = 0; l < bundle.theta_cov_per_l.size(); ++l) {
    ci.gamma_bands[l].resize(static_cast<std::size_t>(u_grid.size()));
    for (Eigen::Index k = 0; k < u_grid.size(); ++k) {
      double g = eval_varying_coef(estimate, static_cast<int>(l), u_grid(k));
      double var = gamma_variance(bundle, estimate.basis, static_cast<int>(l),
                                  u_grid(k));
      double half = z * std::sqrt(std::max(0.0, var)) / denom;
      ci.gamma_bands[l][static_cast<std::size_t>(k)] = Interval{g - half, g + half};
    }
  }
  return ci;
}

}  // namespace plvcsar
