#include "plvcsar/spline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "plvcsar/errors.hpp"
#include "plvcsar/log.hpp"

namespace plvcsar {

SplineBasis make_knots(const Vector& u_values, int k_n, int degree) {
  if (u_values.size() == 0) throw data_error("make_knots: empty sample");
  if (k_n < 0) throw parameter_error("make_knots: k_n must be >= 0");
  if (degree < 0) throw parameter_error("make_knots: degree must be >= 0");
  if (!u_values.allFinite()) {
    throw data_error("make_knots: non-finite smoothing-variable values");
  }

  std::vector<double> sorted(u_values.data(), u_values.data() + u_values.size());
  std::sort(sorted.begin(), sorted.end());
  const double umin = sorted.front();
  const double umax = sorted.back();
  if (!(umax > umin)) {
    throw data_error("make_knots: smoothing variable has degenerate support");
  }
  Eigen::Map<const Vector> sorted_map(sorted.data(),
                                      static_cast<Eigen::Index>(sorted.size()));

  std::vector<double> interior(static_cast<std::size_t>(k_n));
  for (int j = 1; j <= k_n; ++j) {
    double p = static_cast<double>(j) / static_cast<double>(k_n + 1);
    interior[static_cast<std::size_t>(j - 1)] = stats::quantile_sorted(sorted_map, p);
  }

  // Quantile placement can collide on heavily tied data; nudge duplicates
  // toward the midpoint of the surrounding distinct values.
  const double span = umax - umin;
  bool jittered = false;
  for (std::size_t j = 0; j < interior.size(); ++j) {
    double lo = (j == 0) ? umin : interior[j - 1];
    if (interior[j] <= lo) {
      double hi = umax;
      for (std::size_t k = j + 1; k < interior.size(); ++k) {
        if (interior[k] > lo) {
          hi = interior[k];
          break;
        }
      }
      interior[j] = lo + 0.5 * (hi - lo) /
                             static_cast<double>(interior.size() - j + 1);
      jittered = true;
    }
    interior[j] = std::min(std::max(interior[j], umin + 1e-12 * span),
                           umax - 1e-12 * span);
  }
  if (jittered) {
    warn("make_knots: duplicate interior knots jittered toward midpoints");
  }

  SplineBasis basis;
  basis.interior_knot_count = k_n;
  basis.degree = degree;
  basis.knots.resize(k_n + 2 * (degree + 1));
  Eigen::Index pos = 0;
  for (int j = 0; j <= degree; ++j) basis.knots(pos++) = umin;
  for (int j = 0; j < k_n; ++j) basis.knots(pos++) = interior[static_cast<std::size_t>(j)];
  for (int j = 0; j <= degree; ++j) basis.knots(pos++) = umax;
  return basis;
}

Vector eval_basis(double u, const SplineBasis& basis) {
  const int h = basis.degree;
  const int nb = basis.basis_dim();
  const Vector& t = basis.knots;
  if (t.size() != nb + h + 1) {
    throw data_error("eval_basis: inconsistent knot vector length");
  }

  if (u < basis.u_min() || u > basis.u_max()) {
    warn("eval_basis: evaluation point outside the knot range, clamped");
    u = std::min(std::max(u, basis.u_min()), basis.u_max());
  }

  // Knot span j with t[j] <= u < t[j+1]; the right boundary maps to the last
  // nonempty interval so the basis is left-continuous at u_max.
  int j = h;
  int hi = nb - 1;
  while (j < hi && u >= t(j + 1)) ++j;

  // Cox-de Boor triangular recursion for the h + 1 active functions.
  Vector vals = Vector::Zero(nb);
  std::vector<double> nvals(static_cast<std::size_t>(h + 1), 0.0);
  std::vector<double> left(static_cast<std::size_t>(h + 1), 0.0);
  std::vector<double> right(static_cast<std::size_t>(h + 1), 0.0);
  nvals[0] = 1.0;
  for (int d = 1; d <= h; ++d) {
    left[static_cast<std::size_t>(d)] = u - t(j + 1 - d);
    right[static_cast<std::size_t>(d)] = t(j + d) - u;
    double saved = 0.0;
    for (int r = 0; r < d; ++r) {
      double denom = right[static_cast<std::size_t>(r + 1)] +
                     left[static_cast<std::size_t>(d - r)];
      double tmp = (denom != 0.0) ? nvals[static_cast<std::size_t>(r)] / denom : 0.0;
      nvals[static_cast<std::size_t>(r)] =
          saved + right[static_cast<std::size_t>(r + 1)] * tmp;
      saved = left[static_cast<std::size_t>(d - r)] * tmp;
    }
    nvals[static_cast<std::size_t>(d)] = saved;
  }
  for (int i = 0; i <= h; ++i) {
    vals(j - h + i) = nvals[static_cast<std::size_t>(i)];
  }
  return vals;
}

VaryingCoefBlock build_pi(const Matrix& Z, const Vector& U,
                          const SplineBasis& basis) {
  const Eigen::Index n = Z.rows();
  const Eigen::Index q = Z.cols();
  if (U.size() != n) {
    throw data_error("build_pi: Z and U dimensions disagree");
  }
  const int nb = basis.basis_dim();
  VaryingCoefBlock block;
  block.q = static_cast<int>(q);
  block.q_kn = static_cast<int>(q) * nb;
  block.pi_matrix.resize(n, block.q_kn);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector pi = eval_basis(U(i), basis);
    for (Eigen::Index l = 0; l < q; ++l) {
      block.pi_matrix.row(i).segment(l * nb, nb) = Z(i, l) * pi.transpose();
    }
  }
  return block;
}

double sic_penalized(double objective, int n, int parameter_count) {
  if (n < 1) throw parameter_error("sic: n must be >= 1");
  if (objective < 0.0) throw parameter_error("sic: objective must be >= 0");
  if (objective == 0.0) {
    warn("sic: zero objective saturates the criterion at -infinity");
    return -std::numeric_limits<double>::infinity();
  }
  return std::log(objective) +
         std::log(static_cast<double>(n)) / (2.0 * static_cast<double>(n)) *
             static_cast<double>(parameter_count);
}

double sic(double objective, int n, int p, int q_kn) {
  return sic_penalized(objective, n, 2 + p + q_kn);
}

}  // namespace plvcsar
