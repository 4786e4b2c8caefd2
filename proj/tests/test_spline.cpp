#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "plvcsar/errors.hpp"
#include "plvcsar/rng.hpp"
#include "plvcsar/spline.hpp"

using namespace plvcsar;

TEST_CASE("knot construction without interior knots") {
  Vector u = Vector::LinSpaced(11, 0.0, 1.0);
  SplineBasis basis = make_knots(u, 0, 3);
  CHECK(basis.basis_dim() == 4);
  REQUIRE(basis.knots.size() == 8);
  for (int j = 0; j < 4; ++j) {
    CHECK(basis.knots(j) == doctest::Approx(0.0));
    CHECK(basis.knots(4 + j) == doctest::Approx(1.0));
  }
}

TEST_CASE("single interior knot sits at the empirical median") {
  Vector u = Vector::LinSpaced(101, 0.0, 1.0);
  SplineBasis basis = make_knots(u, 1, 3);
  CHECK(basis.knots(4) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("interior knots match a direct sort-based quantile computation") {
  Rng rng(11);
  Vector u(500);
  for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.uniform(0.0, 2.0);
  SplineBasis basis = make_knots(u, 3, 3);

  std::vector<double> sorted(u.data(), u.data() + u.size());
  std::sort(sorted.begin(), sorted.end());
  for (int j = 1; j <= 3; ++j) {
    double p = j / 4.0;
    double h = (sorted.size() - 1) * p;
    std::size_t lo = static_cast<std::size_t>(h);
    double expected = sorted[lo] + (h - lo) * (sorted[lo + 1] - sorted[lo]);
    CHECK(basis.knots(3 + j) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("degenerate support and bad parameters are rejected") {
  Vector u = Vector::Ones(10);
  CHECK_THROWS_AS(make_knots(u, 2, 3), data_error);
  Vector ok = Vector::LinSpaced(10, 0.0, 1.0);
  CHECK_THROWS_AS(make_knots(ok, -1, 3), parameter_error);
  CHECK_THROWS_AS(make_knots(ok, 0, -2), parameter_error);
}

TEST_CASE("heavily tied data triggers the knot jitter repair") {
  Vector u(12);
  u << 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 2;
  SplineBasis basis = make_knots(u, 3, 3);
  for (Eigen::Index j = 1; j < basis.knots.size(); ++j) {
    CHECK(basis.knots(j) >= basis.knots(j - 1));
  }
  // Interior knots strictly increasing after the repair.
  CHECK(basis.knots(4) < basis.knots(5));
  CHECK(basis.knots(5) < basis.knots(6));
}

TEST_CASE("degree-zero basis is the interval indicator") {
  SplineBasis basis;
  basis.interior_knot_count = 1;
  basis.degree = 0;
  basis.knots.resize(3);
  basis.knots << 0.0, 0.5, 1.0;
  Vector v = eval_basis(0.25, basis);
  REQUIRE(v.size() == 2);
  CHECK(v(0) == doctest::Approx(1.0));
  CHECK(v(1) == doctest::Approx(0.0));
  Vector w = eval_basis(0.75, basis);
  CHECK(w(0) == doctest::Approx(0.0));
  CHECK(w(1) == doctest::Approx(1.0));
}

TEST_CASE("cubic basis without interior knots reproduces Bernstein values") {
  Vector u = Vector::LinSpaced(5, 0.0, 1.0);
  SplineBasis basis = make_knots(u, 0, 3);
  Vector v = eval_basis(0.5, basis);
  REQUIRE(v.size() == 4);
  CHECK(v(0) == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(v(1) == doctest::Approx(0.375).epsilon(1e-12));
  CHECK(v(2) == doctest::Approx(0.375).epsilon(1e-12));
  CHECK(v(3) == doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("basis values agree with the recursive oracle") {
  Rng rng(23);
  Vector u(200);
  for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.uniform(0.0, 2.0);
  for (int k_n : {0, 2, 5}) {
    for (int degree : {1, 2, 3}) {
      SplineBasis basis = make_knots(u, k_n, degree);
      for (int rep = 0; rep < 50; ++rep) {
        double point = rng.uniform(basis.u_min(), basis.u_max());
        Vector v = eval_basis(point, basis);
        for (int s = 0; s < basis.basis_dim(); ++s) {
          double ref = oracles::bspline_recursive(basis.knots, s, degree, point);
          CHECK(v(s) == doctest::Approx(ref).epsilon(1e-10));
        }
      }
    }
  }
}

TEST_CASE("partition of unity, nonnegativity, and local support") {
  Rng rng(37);
  Vector u(300);
  for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.uniform(-1.0, 3.0);
  SplineBasis basis = make_knots(u, 4, 3);
  for (int rep = 0; rep < 10000; ++rep) {
    double point = rng.uniform(basis.u_min(), basis.u_max());
    Vector v = eval_basis(point, basis);
    CHECK(std::fabs(v.sum() - 1.0) <= 1e-12);
    int nonzero = 0;
    for (int s = 0; s < basis.basis_dim(); ++s) {
      CHECK(v(s) >= 0.0);
      if (v(s) != 0.0) {
        ++nonzero;
        // Local support: function s lives on [knots(s), knots(s + degree + 1)].
        CHECK(point >= basis.knots(s) - 1e-12);
        CHECK(point <= basis.knots(s + basis.degree + 1) + 1e-12);
      }
    }
    CHECK(nonzero <= basis.degree + 1);
  }
}

TEST_CASE("points outside the range are clamped") {
  Vector u = Vector::LinSpaced(20, 0.0, 1.0);
  SplineBasis basis = make_knots(u, 2, 3);
  Vector inside = eval_basis(1.0, basis);
  Vector outside = eval_basis(1.7, basis);
  CHECK((inside - outside).lpNorm<Eigen::Infinity>() == doctest::Approx(0.0));
}

TEST_CASE("cubic spline reproduces cubics through least squares") {
  Rng rng(5);
  const int n = 400;
  Vector u(n);
  for (int i = 0; i < n; ++i) u(i) = rng.uniform(0.0, 1.0);
  SplineBasis basis = make_knots(u, 3, 3);
  Matrix B(n, basis.basis_dim());
  Vector target(n);
  for (int i = 0; i < n; ++i) {
    B.row(i) = eval_basis(u(i), basis).transpose();
    target(i) = u(i) * u(i) * u(i);
  }
  Vector coef = (B.transpose() * B).ldlt().solve(B.transpose() * target);
  double max_err = 0.0;
  for (int k = 0; k < 500; ++k) {
    double point = 0.001 + 0.998 * static_cast<double>(k) / 499.0;
    double fitted = eval_basis(point, basis).dot(coef);
    max_err = std::max(max_err, std::fabs(fitted - point * point * point));
  }
  CHECK(max_err < 1e-8);
}

TEST_CASE("varying-coefficient block matches the naive loop") {
  Rng rng(13);
  const int n = 40, q = 3;
  Matrix Z(n, q);
  Vector u(n);
  for (int i = 0; i < n; ++i) {
    u(i) = rng.uniform(0.0, 2.0);
    for (int l = 0; l < q; ++l) Z(i, l) = rng.normal();
  }
  SplineBasis basis = make_knots(u, 2, 3);
  VaryingCoefBlock block = build_pi(Z, u, basis);
  const int nb = basis.basis_dim();
  REQUIRE(block.q_kn == q * nb);
  for (int i = 0; i < n; ++i) {
    Vector pi = eval_basis(u(i), basis);
    for (int l = 0; l < q; ++l) {
      for (int s = 0; s < nb; ++s) {
        CHECK(block.pi_matrix(i, l * nb + s) ==
              doctest::Approx(Z(i, l) * pi(s)).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("unit loadings reduce the block to the raw basis matrix") {
  Vector u = Vector::LinSpaced(30, 0.0, 1.0);
  SplineBasis basis = make_knots(u, 1, 3);
  Matrix Z = Matrix::Ones(30, 1);
  VaryingCoefBlock block = build_pi(Z, u, basis);
  for (int i = 0; i < 30; ++i) {
    Vector pi = eval_basis(u(i), basis);
    CHECK((block.pi_matrix.row(i).transpose() - pi).lpNorm<Eigen::Infinity>() <=
          1e-15);
  }

  Matrix Z2(1, 2);
  Z2 << 2.0, 0.0;
  Vector u2(1);
  u2 << 0.5;
  VaryingCoefBlock b2 = build_pi(Z2, u2, basis);
  Vector pi = eval_basis(0.5, basis);
  for (int s = 0; s < basis.basis_dim(); ++s) {
    CHECK(b2.pi_matrix(0, s) == doctest::Approx(2.0 * pi(s)));
    CHECK(b2.pi_matrix(0, basis.basis_dim() + s) == doctest::Approx(0.0));
  }
}

TEST_CASE("information criterion arithmetic") {
  // Direct evaluation of the penalized-likelihood formula.
  double expected = std::log(1.0) + std::log(100.0) / 200.0 * (2 + 1 + 14);
  CHECK(sic(1.0, 100, 1, 14) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.3914).epsilon(1e-3));

  // Multiplicative objectives split additively.
  double a = 2.7, b = 0.4;
  CHECK(sic(a * b, 50, 2, 10) ==
        doctest::Approx(std::log(a) + std::log(b) +
                        std::log(50.0) / 100.0 * 14.0).epsilon(1e-12));

  // The penalty is linear in the block dimension.
  double delta = sic(1.3, 80, 1, 20) - sic(1.3, 80, 1, 10);
  CHECK(delta == doctest::Approx(std::log(80.0) / 160.0 * 10.0).epsilon(1e-12));

  CHECK(std::isinf(sic(0.0, 10, 1, 4)));
  CHECK(sic(0.0, 10, 1, 4) < 0.0);
  CHECK_THROWS_AS(sic(-1.0, 10, 1, 4), parameter_error);
}
