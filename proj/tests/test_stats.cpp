#include <doctest.h>

#include <cmath>

#include "plvcsar/errors.hpp"
#include "plvcsar/rng.hpp"
#include "plvcsar/stats.hpp"

using namespace plvcsar;
using namespace plvcsar::stats;

TEST_CASE("normal quantile against reference values") {
  CHECK(norm_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(norm_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-10));
  CHECK(norm_quantile(0.95) == doctest::Approx(1.6448536269514722).epsilon(1e-10));
  CHECK(norm_quantile(0.99) == doctest::Approx(2.3263478740408408).epsilon(1e-10));
  CHECK(norm_quantile(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-10));
  CHECK(norm_quantile(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-8));
  CHECK_THROWS_AS(norm_quantile(0.0), parameter_error);
  CHECK_THROWS_AS(norm_quantile(1.0), parameter_error);
}

TEST_CASE("normal cdf and quantile invert each other") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    double p = rng.uniform();
    CHECK(norm_cdf(norm_quantile(p)) == doctest::Approx(p).epsilon(1e-11));
  }
  CHECK(1.0 - norm_cdf(1.959963984540054) == doctest::Approx(0.025).epsilon(1e-10));
}

TEST_CASE("chi-square tail values") {
  // 0.95 cutoff at one degree of freedom.
  CHECK(chi2_upper_tail(3.8415, 1) == doctest::Approx(0.05).epsilon(2e-3));
  CHECK(chi2_quantile(0.95, 1) == doctest::Approx(3.841458820694124).epsilon(1e-9));
  CHECK(chi2_upper_tail(0.0, 4) == doctest::Approx(1.0));
  CHECK(chi2_quantile(0.95, 2) == doctest::Approx(5.991464547107979).epsilon(1e-9));
  // chi2(2) is an exponential with mean 2.
  CHECK(chi2_upper_tail(3.0, 2) == doctest::Approx(std::exp(-1.5)).epsilon(1e-10));
  for (int df : {1, 2, 5, 17}) {
    for (double x : {0.2, 1.0, 4.0, 11.0}) {
      CHECK(chi2_cdf(x, df) + chi2_upper_tail(x, df) ==
            doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("sample quantiles interpolate order statistics") {
  Vector v(5);
  v << 10.0, 20.0, 30.0, 40.0, 50.0;
  CHECK(quantile_sorted(v, 0.5) == doctest::Approx(30.0));
  CHECK(quantile_sorted(v, 0.25) == doctest::Approx(20.0));
  CHECK(quantile_sorted(v, 0.1) == doctest::Approx(14.0));
  CHECK(quantile_sorted(v, 0.0) == doctest::Approx(10.0));
  CHECK(quantile_sorted(v, 1.0) == doctest::Approx(50.0));
}

TEST_CASE("bandwidth rules behave like bandwidths") {
  double h1 = quantile_bandwidth(BandwidthRule::hall_sheather, 0.5, 100);
  double h2 = quantile_bandwidth(BandwidthRule::hall_sheather, 0.5, 10000);
  CHECK(h1 > 0.0);
  CHECK(h2 < h1);
  // Symmetric in tau around one half.
  CHECK(quantile_bandwidth(BandwidthRule::hall_sheather, 0.25, 400) ==
        doctest::Approx(quantile_bandwidth(BandwidthRule::hall_sheather, 0.75, 400)));
  CHECK(quantile_bandwidth(BandwidthRule::bofinger, 0.5, 400) > 0.0);
}

TEST_CASE("density at zero: fixed-bandwidth formulas") {
  DensityConfig cfg;
  cfg.fixed_bandwidth = 0.7;
  Vector zeros = Vector::Zero(8);
  DensityWeights w = density_at_zero(zeros, 0.5, cfg);
  const double expected = 1.0 / (0.7 * std::sqrt(2.0 * 3.14159265358979323846));
  for (Eigen::Index i = 0; i < w.values.size(); ++i) {
    CHECK(w.values(i) == doctest::Approx(expected).epsilon(1e-12));
  }

  // Scaling the residuals and the bandwidth together scales the estimate.
  Rng rng(3);
  Vector r(50);
  for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = rng.normal();
  DensityConfig base;
  base.fixed_bandwidth = 0.5;
  DensityConfig scaled;
  scaled.fixed_bandwidth = 1.5;
  DensityWeights wb = density_at_zero(r, 0.5, base);
  DensityWeights ws = density_at_zero(3.0 * r, 0.5, scaled);
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    CHECK(ws.values(i) == doctest::Approx(wb.values(i) / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("density at zero matches the Gaussian convolution oracle") {
  // For standard normal residuals the expected kernel estimate at zero is
  // the N(0, 1 + h^2) density at zero: 1 / sqrt(2 pi (1 + h^2)).
  Rng rng(17);
  const int n = 20000;
  Vector r(n);
  for (int i = 0; i < n; ++i) r(i) = rng.normal();
  for (double h : {0.5, 1.0}) {
    DensityConfig cfg;
    cfg.fixed_bandwidth = h;
    DensityWeights w = density_at_zero(r, 0.5, cfg);
    double expected = 1.0 / std::sqrt(2.0 * 3.14159265358979323846 * (1.0 + h * h));
    CHECK(std::fabs(w.values.mean() - expected) < 0.15 * expected);
  }
}

TEST_CASE("homoscedastic mode returns a common value") {
  Rng rng(9);
  Vector r(30);
  for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = rng.normal();
  DensityConfig cfg;
  cfg.homoscedastic = true;
  DensityWeights w = density_at_zero(r, 0.3, cfg);
  for (Eigen::Index i = 1; i < r.size(); ++i) {
    CHECK(w.values(i) == doctest::Approx(w.values(0)));
  }
  CHECK(w.bandwidth > 0.0);
}

TEST_CASE("constant residuals cannot produce a bandwidth") {
  Vector r = Vector::Ones(20);
  DensityConfig cfg;
  CHECK_THROWS_AS(density_at_zero(r, 0.5, cfg), parameter_error);
}

TEST_CASE("ks distance of a near-perfect sample is small") {
  std::vector<double> grid;
  for (int i = 1; i <= 1000; ++i) grid.push_back(static_cast<double>(i) / 1001.0);
  double d = ks_distance(grid, [](double x) { return x; });
  CHECK(d < 0.01);
}

TEST_CASE("rng streams are deterministic and reasonably uniform") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    double va = a.uniform();
    CHECK(va == b.uniform());
    CHECK(va > 0.0);
    CHECK(va < 1.0);
  }
  CHECK(a.uniform() != c.uniform());
}
