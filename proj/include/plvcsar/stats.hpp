#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "plvcsar/errors.hpp"

namespace plvcsar {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace stats {

double norm_pdf(double x);
double norm_cdf(double x);

//! Standard normal quantile; throws parameter_error unless 0 < p < 1.
double norm_quantile(double p);

//! Regularized incomplete gamma functions P(a, x) and Q(a, x) = 1 - P(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

double chi2_cdf(double x, int df);
double chi2_upper_tail(double x, int df);
double chi2_quantile(double p, int df);

//! Linear-interpolation sample quantile on an ascending-sorted vector
//! (the common "type 7" definition).
double quantile_sorted(const Vector& sorted_values, double p);
double quantile(const Vector& values, double p);

double sample_sd(const Vector& x);
double interquartile_range(const Vector& x);

enum class BandwidthRule { hall_sheather, bofinger };

//! Quantile-space bandwidth for density estimation at level tau.
double quantile_bandwidth(BandwidthRule rule, double tau, int n,
                          double alpha = 0.05);

struct DensityConfig {
  BandwidthRule rule = BandwidthRule::hall_sheather;
  double multiplier = 1.0;
  // When positive, used directly as the residual-scale bandwidth.
  double fixed_bandwidth = 0.0;
  // Replace per-observation values by their mean (common error density).
  bool homoscedastic = false;
};

struct DensityWeights {
  Vector values;     // per-observation density estimate at zero
  double bandwidth;  // residual-scale bandwidth actually used
};

//! Gaussian-kernel estimate of each residual's error density at zero,
//! f_i(0) ~= k(e_i / h) / h. The default bandwidth maps the Hall-Sheather
//! quantile-space rule to the residual scale through the normal quantile
//! spread and a robust scale estimate.
DensityWeights density_at_zero(const Vector& residuals, double tau,
                               const DensityConfig& config);

//! Kolmogorov-Smirnov distance between a sample and a reference CDF.
double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf);

}  // namespace stats
}  // namespace plvcsar
