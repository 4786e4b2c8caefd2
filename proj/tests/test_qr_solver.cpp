#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "plvcsar/errors.hpp"
#include "plvcsar/qr_solver.hpp"
#include "plvcsar/rng.hpp"

using namespace plvcsar;

namespace {

CheckLossProblem random_problem(Rng& rng, Eigen::Index n, Eigen::Index m,
                                double tau) {
  CheckLossProblem prob;
  prob.design.resize(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    prob.design(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < m; ++j) prob.design(i, j) = rng.normal();
  }
  prob.response.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) prob.response(i) = rng.normal() * 2.0;
  prob.tau = tau;
  return prob;
}

}  // namespace

TEST_CASE("check loss values") {
  CHECK(check_loss(1.0, 0.5) == doctest::Approx(0.5));
  CHECK(check_loss(-2.0, 0.25) == doctest::Approx(1.5));
  CHECK(check_loss(0.0, 0.9) == doctest::Approx(0.0));
  CHECK(check_loss(3.0, 0.9) >= 0.0);
  CHECK_THROWS_AS(check_loss(1.0, 0.0), parameter_error);
  CHECK_THROWS_AS(check_loss(1.0, 1.0), parameter_error);
}

TEST_CASE("psi values and the zero convention") {
  CHECK(psi(0.3, 0.5) == doctest::Approx(0.5));
  CHECK(psi(-0.3, 0.5) == doctest::Approx(-0.5));
  CHECK(psi(-1.0, 0.25) == doctest::Approx(-0.75));
  CHECK(psi(0.0, 0.25) == doctest::Approx(0.25));
  CHECK_THROWS_AS(psi(0.0, -0.1), parameter_error);
}

TEST_CASE("intercept-only solves match order-statistic scans") {
  CheckLossProblem prob;
  prob.design = Matrix::Ones(3, 1);
  prob.response.resize(3);
  prob.response << 1.0, 2.0, 3.0;
  prob.tau = 0.5;
  QrFit fit = solve_qr(prob);
  CHECK(fit.coefficients(0) == doctest::Approx(2.0).epsilon(1e-8));

  // With 4 observations and tau = 0.25 every point of [1, 2] is optimal;
  // the scan picks the leftmost order statistic, the solver may return any
  // point of the flat face, so only objectives are compared.
  CheckLossProblem prob2;
  prob2.design = Matrix::Ones(4, 1);
  prob2.response.resize(4);
  prob2.response << 1.0, 2.0, 3.0, 4.0;
  prob2.tau = 0.25;
  double arg = 0.0;
  double best = oracles::brute_force_scalar_fit(prob2.response, prob2.tau, &arg);
  CHECK(arg == doctest::Approx(1.0));
  QrFit fit2 = solve_qr(prob2);
  CHECK(fit2.objective == doctest::Approx(best).epsilon(1e-9));
  CHECK(fit2.coefficients(0) >= 1.0 - 1e-7);
  CHECK(fit2.coefficients(0) <= 2.0 + 1e-7);
}

TEST_CASE("two-column random instance matches vertex enumeration") {
  Rng rng(71);
  CheckLossProblem prob = random_problem(rng, 6, 2, 0.5);
  QrFit fit = solve_qr(prob);
  double best = oracles::vertex_enum_objective(prob.design, prob.response, prob.tau);
  CHECK(std::fabs(fit.objective - best) <= 1e-8);
}

TEST_CASE("oracle equivalence over random small instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.index(3));
    Eigen::Index n = m + 1 + static_cast<Eigen::Index>(rng.index(12 - m));
    double tau = (trial % 3 == 0) ? 0.25 : (trial % 3 == 1 ? 0.5 : 0.75);
    CheckLossProblem prob = random_problem(rng, n, m, tau);
    QrFit fit = solve_qr(prob);
    double best = oracles::vertex_enum_objective(prob.design, prob.response, tau);
    CHECK(std::fabs(fit.objective - best) <= 1e-8);
    CHECK(fit.objective >= best - 1e-10);
  }
}

TEST_CASE("fits interpolate at least m observations on generic data") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    CheckLossProblem prob = random_problem(rng, 40, 3, 0.5);
    QrFit fit = solve_qr(prob);
    if (!fit.degenerate) {
      CHECK(fit.n_interpolated >= 3);
    }
    CHECK(fit.residuals.isApprox(prob.response - prob.design * fit.coefficients,
                                 1e-10));
  }
}

TEST_CASE("perturbation optimality certificate") {
  Rng rng(99);
  CheckLossProblem prob = random_problem(rng, 80, 3, 0.25);
  QrFit fit = solve_qr(prob);
  double scale = fit.coefficients.cwiseAbs().maxCoeff() + 1.0;
  CHECK(oracles::perturbation_optimal(prob.design, prob.response,
                                      fit.coefficients, prob.tau, 1e-6 * scale,
                                      1e-9));
}

TEST_CASE("scale equivariance of the response") {
  Rng rng(31);
  CheckLossProblem prob = random_problem(rng, 50, 2, 0.75);
  QrFit fit = solve_qr(prob);
  CheckLossProblem scaled = prob;
  scaled.response *= 3.5;
  QrFit sfit = solve_qr(scaled);
  CHECK(sfit.objective == doctest::Approx(3.5 * fit.objective).epsilon(1e-10));
  for (Eigen::Index j = 0; j < fit.coefficients.size(); ++j) {
    CHECK(sfit.coefficients(j) ==
          doctest::Approx(3.5 * fit.coefficients(j)).epsilon(1e-8));
  }
}

TEST_CASE("design reparameterization leaves fitted values unchanged") {
  Rng rng(77);
  CheckLossProblem prob = random_problem(rng, 50, 3, 0.5);
  Matrix T(3, 3);
  T << 2.0, 0.3, 0.0, -1.0, 1.5, 0.2, 0.0, 0.7, 1.1;
  QrFit fit = solve_qr(prob);
  CheckLossProblem re = prob;
  re.design = prob.design * T;
  QrFit rfit = solve_qr(re);
  Vector fitted_a = prob.design * fit.coefficients;
  Vector fitted_b = re.design * rfit.coefficients;
  CHECK((fitted_a - fitted_b).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("rank-deficient designs are rejected") {
  CheckLossProblem prob;
  prob.design.resize(6, 2);
  prob.design.col(0) = Vector::Ones(6);
  prob.design.col(1) = 2.0 * Vector::Ones(6);
  prob.response = Vector::LinSpaced(6, 0.0, 1.0);
  prob.tau = 0.5;
  CHECK_THROWS_AS(solve_qr(prob), degenerate_design_error);
}

TEST_CASE("iteration cap produces a solver error with diagnostics") {
  Rng rng(13);
  CheckLossProblem prob = random_problem(rng, 60, 3, 0.5);
  QrSolverConfig config;
  config.max_iterations = 1;
  CHECK_THROWS_AS(solve_qr(prob, config), solver_error);
  try {
    solve_qr(prob, config);
  } catch (const solver_error& e) {
    std::string msg = e.what();
    CHECK(msg.find("duality gap") != std::string::npos);
  }
}

TEST_CASE("warm starts land on the same solution") {
  Rng rng(41);
  CheckLossProblem prob = random_problem(rng, 70, 3, 0.5);
  QrDesign design(prob.design);
  QrFit cold = design.solve(prob.response, prob.tau);
  Vector warm = cold.coefficients;
  warm.array() += 0.05;
  QrFit hot = design.solve(prob.response, prob.tau, &warm);
  CHECK(hot.objective == doctest::Approx(cold.objective).epsilon(1e-9));
}
