#include "plvcsar/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "plvcsar/errors.hpp"
#include "plvcsar/log.hpp"
#include "plvcsar/rng.hpp"

namespace plvcsar {

double Rng::normal() { return stats::norm_quantile(uniform()); }

namespace stats {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kSqrt2Pi = 2.5066282746310002;
}  // namespace

double norm_pdf(double x) { return std::exp(-0.5 * x * x) / kSqrt2Pi; }

double norm_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

// Acklam's rational approximation with one Halley refinement step; absolute
// error is below 1e-15 over (0, 1).
double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw parameter_error("norm_quantile: p must lie in (0, 1)");
  }
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double e = norm_cdf(x) - p;
  double u = e * kSqrt2Pi * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

namespace {

// Series expansion of P(a, x), valid for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a, x) (modified Lentz), valid for x >= a + 1.
double gamma_q_cf(double a, double x) {
  const double fpmin = std::numeric_limits<double>::min() / 1e-30;
  double b = x + 1.0 - a;
  double c = 1.0 / fpmin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = b + an / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
  if (a <= 0.0 || x < 0.0) {
    throw parameter_error("gamma_p: require a > 0 and x >= 0");
  }
  if (x == 0.0) return 0.0;
  return (x < a + 1.0) ? gamma_p_series(a, x) : 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
  if (a <= 0.0 || x < 0.0) {
    throw parameter_error("gamma_q: require a > 0 and x >= 0");
  }
  if (x == 0.0) return 1.0;
  return (x < a + 1.0) ? 1.0 - gamma_p_series(a, x) : gamma_q_cf(a, x);
}

double chi2_cdf(double x, int df) {
  if (df < 1) throw parameter_error("chi2_cdf: df must be >= 1");
  if (x <= 0.0) return 0.0;
  return gamma_p(0.5 * df, 0.5 * x);
}

double chi2_upper_tail(double x, int df) {
  if (df < 1) throw parameter_error("chi2_upper_tail: df must be >= 1");
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * df, 0.5 * x);
}

double chi2_quantile(double p, int df) {
  if (!(p > 0.0 && p < 1.0)) {
    throw parameter_error("chi2_quantile: p must lie in (0, 1)");
  }
  double hi = df + 10.0 * std::sqrt(2.0 * df) + 10.0;
  while (chi2_cdf(hi, df) < p) hi *= 2.0;
  double lo = 0.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (chi2_cdf(mid, df) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-13 * (1.0 + hi)) break;
  }
  return 0.5 * (lo + hi);
}

double quantile_sorted(const Vector& sorted_values, double p) {
  const Eigen::Index n = sorted_values.size();
  if (n == 0) throw parameter_error("quantile: empty sample");
  if (p <= 0.0) return sorted_values(0);
  if (p >= 1.0) return sorted_values(n - 1);
  double h = static_cast<double>(n - 1) * p;
  Eigen::Index lo = static_cast<Eigen::Index>(std::floor(h));
  if (lo >= n - 1) return sorted_values(n - 1);
  double frac = h - static_cast<double>(lo);
  return sorted_values(lo) + frac * (sorted_values(lo + 1) - sorted_values(lo));
}

double quantile(const Vector& values, double p) {
  std::vector<double> tmp(values.data(), values.data() + values.size());
  std::sort(tmp.begin(), tmp.end());
  Eigen::Map<const Vector> sorted(tmp.data(), static_cast<Eigen::Index>(tmp.size()));
  return quantile_sorted(sorted, p);
}

double sample_sd(const Vector& x) {
  const Eigen::Index n = x.size();
  if (n < 2) return 0.0;
  double mean = x.mean();
  double ss = (x.array() - mean).square().sum();
  return std::sqrt(ss / static_cast<double>(n - 1));
}

double interquartile_range(const Vector& x) {
  std::vector<double> tmp(x.data(), x.data() + x.size());
  std::sort(tmp.begin(), tmp.end());
  Eigen::Map<const Vector> sorted(tmp.data(), static_cast<Eigen::Index>(tmp.size()));
  return quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
}

double quantile_bandwidth(BandwidthRule rule, double tau, int n, double alpha) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw parameter_error("quantile_bandwidth: tau must lie in (0, 1)");
  }
  if (n < 2) throw parameter_error("quantile_bandwidth: n must be >= 2");
  double x0 = norm_quantile(tau);
  double f0 = norm_pdf(x0);
  if (rule == BandwidthRule::hall_sheather) {
    double za = norm_quantile(1.0 - 0.5 * alpha);
    return std::pow(n, -1.0 / 3.0) * std::pow(za, 2.0 / 3.0) *
           std::pow(1.5 * f0 * f0 / (2.0 * x0 * x0 + 1.0), 1.0 / 3.0);
  }
  return std::pow(n, -0.2) *
         std::pow(4.5 * std::pow(f0, 4) / std::pow(2.0 * x0 * x0 + 1.0, 2), 0.2);
}

DensityWeights density_at_zero(const Vector& residuals, double tau,
                               const DensityConfig& config) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw parameter_error("density_at_zero: tau must lie in (0, 1)");
  }
  const Eigen::Index n = residuals.size();
  if (n < 1) throw parameter_error("density_at_zero: empty residual vector");

  double h = config.fixed_bandwidth;
  if (!(h > 0.0)) {
    double bw = quantile_bandwidth(config.rule, tau, static_cast<int>(n));
    double margin = std::min(tau, 1.0 - tau);
    if (bw >= margin) {
      warn("density_at_zero: quantile bandwidth clipped to keep tau +/- h inside (0, 1)");
      bw = 0.99 * margin;
    }
    double sd = sample_sd(residuals);
    double iqr = interquartile_range(residuals);
    double scale = sd;
    if (iqr > 0.0) scale = std::min(sd, iqr / 1.34);
    h = (norm_quantile(tau + bw) - norm_quantile(tau - bw)) * scale *
        config.multiplier;
  }
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw parameter_error("density_at_zero: bandwidth is zero or non-finite");
  }

  DensityWeights out;
  out.bandwidth = h;
  out.values = (residuals.array() / h).unaryExpr([](double t) {
    return norm_pdf(t);
  }) / h;
  if (config.homoscedastic) {
    out.values.setConstant(out.values.mean());
  }
  return out;
}

double ks_distance(std::vector<double> sample,
                   const std::function<double(double)>& cdf) {
  if (sample.empty()) throw parameter_error("ks_distance: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    double f = cdf(sample[i]);
    d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
    d = std::max(d, std::fabs(f - static_cast<double>(i + 1) / n));
  }
  return d;
}

}  // namespace stats
}  // namespace plvcsar
