#include "plvcsar/sim.hpp"

#include <cmath>
#include <sstream>

#include "plvcsar/errors.hpp"
#include "plvcsar/parallel.hpp"
#include "plvcsar/rng.hpp"

namespace plvcsar {

DgpExample dgp_example_from_string(const std::string& name) {
  if (name == "ex1" || name == "ex1_plvc") return DgpExample::ex1_plvc;
  if (name == "ex2" || name == "ex2_plvc_hetero") return DgpExample::ex2_plvc_hetero;
  if (name == "ex1_sar") return DgpExample::ex1_sar;
  if (name == "ex2_sar" || name == "ex2_sar_hetero") return DgpExample::ex2_sar_hetero;
  throw parameter_error("unknown example: " + name +
                        " (expected ex1, ex2, ex1_sar, ex2_sar)");
}

std::string to_string(DgpExample example) {
  switch (example) {
    case DgpExample::ex1_plvc: return "ex1";
    case DgpExample::ex2_plvc_hetero: return "ex2";
    case DgpExample::ex1_sar: return "ex1_sar";
    case DgpExample::ex2_sar_hetero: return "ex2_sar";
  }
  return "ex1";
}

namespace {

bool is_hetero(DgpExample e) {
  return e == DgpExample::ex2_plvc_hetero || e == DgpExample::ex2_sar_hetero;
}

bool is_sar(DgpExample e) {
  return e == DgpExample::ex1_sar || e == DgpExample::ex2_sar_hetero;
}

}  // namespace

double gamma1_truth(const DgpSpec& spec, double u) {
  if (is_sar(spec.example)) return 1.0;
  return 1.0 - 0.5 * spec.eta * u;
}

double gamma2_truth(const DgpSpec& spec, double u) {
  if (is_sar(spec.example)) return 1.0;
  if (spec.example == DgpExample::ex1_plvc) {
    constexpr double pi = 3.14159265358979323846;
    return 1.0 + std::sin(std::sqrt(2.0) * pi * u);
  }
  return 0.5 * u * u - u + 1.0;
}

Dataset generate(const DgpSpec& spec) {
  if (spec.n < 20) throw parameter_error("generate: n must be >= 20");
  if (!(std::fabs(spec.rho) < 1.0)) {
    throw parameter_error("generate: require |rho| < 1 for a row-normalized W");
  }
  if (!(spec.tau > 0.0 && spec.tau < 1.0)) {
    throw parameter_error("generate: tau must lie in (0, 1)");
  }

  const int n = spec.n;
  Rng rng(spec.seed);

  Vector U(n), X(n), Z1(n), Z2(n), e(n);
  for (int i = 0; i < n; ++i) U(i) = rng.uniform(0.0, 2.0);
  for (int i = 0; i < n; ++i) X(i) = rng.normal();
  const bool hetero_draws = is_hetero(spec.example);
  for (int i = 0; i < n; ++i) {
    Z1(i) = hetero_draws ? rng.normal() : rng.uniform(-2.0, 2.0);
  }
  for (int i = 0; i < n; ++i) {
    Z2(i) = hetero_draws ? rng.uniform(-2.0, 2.0) : 1.0 + rng.normal();
  }
  for (int i = 0; i < n; ++i) e(i) = rng.normal();

  // Errors centered so their tau-th quantile is zero.
  const double shift = stats::norm_quantile(spec.tau);
  Vector rhs(n);
  for (int i = 0; i < n; ++i) {
    double eps = spec.noise_scale * (e(i) - shift);
    double mult = hetero_draws ? (1.0 + 0.5 * Z1(i)) : 1.0;
    rhs(i) = X(i) * spec.beta + Z1(i) * gamma1_truth(spec, U(i)) +
             Z2(i) * gamma2_truth(spec, U(i)) + mult * eps;
  }

  Dataset ds;
  ds.W = build_weight_matrix(n, spec.weight_r);
  Matrix lhs = Matrix::Identity(n, n) - spec.rho * ds.W;
  Eigen::PartialPivLU<Matrix> lu(lhs);
  ds.y = lu.solve(rhs);
  if ((lhs * ds.y - rhs).cwiseAbs().maxCoeff() >
      1e-8 * (1.0 + rhs.cwiseAbs().maxCoeff())) {
    throw data_error("generate: (I - rho W) is numerically singular");
  }
  ds.X = X;
  ds.Zstar.resize(n, 2);
  ds.Zstar.col(0) = Z1;
  ds.Zstar.col(1) = Z2;
  ds.U = U;
  return ds;
}

double bias(const std::vector<double>& estimates, double truth) {
  if (estimates.empty()) throw parameter_error("bias: empty estimate set");
  double sum = 0.0;
  for (double v : estimates) sum += v - truth;
  return sum / static_cast<double>(estimates.size());
}

double rmse(const std::vector<double>& estimates, double truth) {
  if (estimates.empty()) throw parameter_error("rmse: empty estimate set");
  double sum = 0.0;
  for (double v : estimates) sum += (v - truth) * (v - truth);
  return std::sqrt(sum / static_cast<double>(estimates.size()));
}

double made(const std::function<double(double)>& estimate,
            const std::function<double(double)>& truth, const Vector& grid) {
  if (grid.size() == 0) throw parameter_error("made: empty grid");
  double sum = 0.0;
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    sum += std::fabs(estimate(grid(k)) - truth(grid(k)));
  }
  return sum / static_cast<double>(grid.size());
}

Vector made_grid(double u_lo, double u_hi, int points) {
  if (!(u_hi > u_lo) || points < 2) {
    throw parameter_error("made_grid: invalid range");
  }
  const double trim = 0.025 * (u_hi - u_lo);
  Vector grid(points);
  const double lo = u_lo + trim;
  const double hi = u_hi - trim;
  for (int k = 0; k < points; ++k) {
    grid(k) = lo + (hi - lo) * static_cast<double>(k) /
                       static_cast<double>(points - 1);
  }
  return grid;
}

namespace {

struct ReplicateRecord {
  bool ok = false;
  double rho = 0.0;
  std::vector<double> beta;
  std::vector<double> made_gamma;
};

std::function<double(double)> truth_curve(const DgpSpec& spec, Eigen::Index l) {
  if (l == 0) {
    return [spec](double u) { return gamma1_truth(spec, u); };
  }
  return [spec](double u) { return gamma2_truth(spec, u); };
}

ReplicateRecord fit_replicate(const DgpSpec& rep_spec, const IvqrConfig& config,
                              const McOptions& options, const Vector& grid) {
  Dataset ds = generate(rep_spec);
  ReplicateRecord rec;
  const Eigen::Index p = ds.p();
  const Eigen::Index q = ds.q();
  const bool intercept = options.add_intercept.value_or(
      options.estimator == EstimatorKind::ivqr);
  const Eigen::Index off = intercept ? 1 : 0;

  if (options.fit_constant_coefficients) {
    // Constant-coefficient fit: the varying covariates join the linear part.
    Dataset flat;
    flat.y = ds.y;
    flat.X.resize(ds.n(), p + q);
    flat.X.leftCols(p) = ds.X;
    flat.X.rightCols(q) = ds.Zstar;
    flat.Zstar.resize(ds.n(), 0);
    flat.U = ds.U;
    flat.W = ds.W;
    if (intercept) flat = with_intercept(flat);
    IvqrConfig cfg = config;
    cfg.k_n = 0;
    IvqrEstimate est = (options.estimator == EstimatorKind::ivqr)
                           ? estimate(flat, cfg)
                           : estimate_naive_qr(flat, cfg);
    rec.rho = est.rho_hat;
    for (Eigen::Index j = 0; j < p; ++j) rec.beta.push_back(est.beta_hat(off + j));
    for (Eigen::Index l = 0; l < q; ++l) {
      double g_const = est.beta_hat(off + p + l);
      rec.made_gamma.push_back(made([g_const](double) { return g_const; },
                                    truth_curve(rep_spec, l), grid));
    }
    rec.ok = true;
    return rec;
  }

  Dataset fit_ds = intercept ? with_intercept(ds) : ds;
  IvqrEstimate est = (options.estimator == EstimatorKind::ivqr)
                         ? estimate(fit_ds, config)
                         : estimate_naive_qr(fit_ds, config);
  rec.rho = est.rho_hat;
  for (Eigen::Index j = 0; j < p; ++j) rec.beta.push_back(est.beta_hat(off + j));
  for (Eigen::Index l = 0; l < q; ++l) {
    rec.made_gamma.push_back(made(
        [&](double u) { return eval_varying_coef(est, static_cast<int>(l), u); },
        truth_curve(rep_spec, l), grid));
  }
  rec.ok = true;
  return rec;
}

}  // namespace

MonteCarloReport run_monte_carlo(const DgpSpec& spec, int reps,
                                 const IvqrConfig& config,
                                 const McOptions& options) {
  if (reps < 1) throw parameter_error("run_monte_carlo: reps must be >= 1");
  const Vector grid = made_grid(0.0, 2.0);

  std::vector<ReplicateRecord> records(static_cast<std::size_t>(reps));
  parallel_for(
      static_cast<std::size_t>(reps),
      [&](std::size_t r) {
        DgpSpec rep_spec = spec;
        rep_spec.seed = spec.seed + static_cast<std::uint64_t>(r);
        try {
          records[r] = fit_replicate(rep_spec, config, options, grid);
        } catch (const error&) {
          records[r].ok = false;
        }
      },
      options.threads);

  MonteCarloReport report;
  report.requested = reps;
  report.spec = spec;
  std::vector<double> rho_hats;
  std::vector<std::vector<double>> beta_hats;
  std::vector<std::vector<double>> made_vals;
  for (const auto& rec : records) {
    if (!rec.ok) {
      ++report.failed;
      continue;
    }
    rho_hats.push_back(rec.rho);
    if (beta_hats.size() < rec.beta.size()) beta_hats.resize(rec.beta.size());
    for (std::size_t j = 0; j < rec.beta.size(); ++j) {
      beta_hats[j].push_back(rec.beta[j]);
    }
    if (made_vals.size() < rec.made_gamma.size()) {
      made_vals.resize(rec.made_gamma.size());
    }
    for (std::size_t l = 0; l < rec.made_gamma.size(); ++l) {
      made_vals[l].push_back(rec.made_gamma[l]);
    }
  }
  report.completed = static_cast<int>(rho_hats.size());
  if (report.failed > 0 &&
      static_cast<double>(report.failed) > 0.05 * static_cast<double>(reps)) {
    std::ostringstream msg;
    msg << "run_monte_carlo: " << report.failed << " of " << reps
        << " replicates failed";
    throw solver_error(msg.str());
  }
  if (report.completed == 0) {
    throw solver_error("run_monte_carlo: no replicate completed");
  }

  report.rho = ParamSummary{bias(rho_hats, spec.rho), rmse(rho_hats, spec.rho)};
  for (auto& col : beta_hats) {
    report.beta.push_back(
        ParamSummary{bias(col, spec.beta), rmse(col, spec.beta)});
  }
  for (auto& col : made_vals) {
    double sum = 0.0;
    for (double v : col) sum += v;
    report.made_gamma.push_back(sum / static_cast<double>(col.size()));
  }
  return report;
}

std::vector<ModelComparisonCell> run_model_comparison(const DgpSpec& plvc_spec,
                                                      int reps,
                                                      const IvqrConfig& config,
                                                      int threads) {
  if (is_sar(plvc_spec.example)) {
    throw parameter_error(
        "run_model_comparison: pass the varying-coefficient example; the "
        "constant-coefficient twin is derived from it");
  }
  DgpSpec sar_spec = plvc_spec;
  sar_spec.example = (plvc_spec.example == DgpExample::ex1_plvc)
                         ? DgpExample::ex1_sar
                         : DgpExample::ex2_sar_hetero;

  std::vector<ModelComparisonCell> cells;
  const DgpSpec* specs[2] = {&plvc_spec, &sar_spec};
  for (const DgpSpec* data_spec : specs) {
    for (bool constant_fit : {false, true}) {
      McOptions options;
      options.estimator = EstimatorKind::ivqr;
      options.fit_constant_coefficients = constant_fit;
      options.threads = threads;
      ModelComparisonCell cell;
      cell.underlying = is_sar(data_spec->example) ? "sar" : "plvcsar";
      cell.fitted = constant_fit ? "sar" : "plvcsar";
      cell.report = run_monte_carlo(*data_spec, reps, config, options);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::vector<SizePowerRow> size_power_study(TestKind kind,
                                           const std::vector<double>& dial_values,
                                           const DgpSpec& spec, int reps,
                                           const RankTestConfig& config,
                                           int threads) {
  if (dial_values.empty()) {
    throw parameter_error("size_power_study: empty dial list");
  }
  std::vector<SizePowerRow> rows;
  for (double dial : dial_values) {
    DgpSpec dial_spec = spec;
    if (kind == TestKind::beta) {
      dial_spec.beta = dial;
    } else {
      dial_spec.eta = dial;
    }

    struct Cell {
      int ok = 0;
      int reject_qr = 0;
      int reject_ivqr = 0;
    };
    std::vector<Cell> cells(static_cast<std::size_t>(reps));
    parallel_for(
        static_cast<std::size_t>(reps),
        [&](std::size_t r) {
          DgpSpec rep_spec = dial_spec;
          rep_spec.seed = spec.seed + static_cast<std::uint64_t>(r);
          try {
            Dataset raw = generate(rep_spec);
            const int raw_p = static_cast<int>(raw.p());
            Dataset aug = with_intercept(raw);
            int k_n = config.base.k_n.value_or(-1);
            if (k_n < 0) {
              k_n = select_knots(aug, config.base.tau,
                                 default_knot_candidates(aug.n()), config.base);
            }
            SplineBasis basis = make_knots(raw.U, k_n, config.base.degree);

            // Tested blocks never include the intercept, which only the
            // instrumented null fits carry.
            std::vector<int> tested_raw, tested_aug;
            if (kind == TestKind::beta) {
              for (int j = 0; j < raw_p; ++j) {
                tested_raw.push_back(j);
                tested_aug.push_back(1 + j);
              }
            } else {
              tested_raw.push_back(0);
              tested_aug.push_back(0);
            }

            RankTestConfig qr_cfg = config;
            qr_cfg.estimator = NullEstimator::naive_qr;
            RankTestConfig iv_cfg = config;
            iv_cfg.estimator = NullEstimator::ivqr;

            RankScoreResult rqr =
                (kind == TestKind::beta)
                    ? rs_beta_test(raw, basis, tested_raw, qr_cfg)
                    : rs_constancy_test(raw, basis, tested_raw, qr_cfg);
            RankScoreResult riv =
                (kind == TestKind::beta)
                    ? rs_beta_test(aug, basis, tested_aug, iv_cfg)
                    : rs_constancy_test(aug, basis, tested_aug, iv_cfg);
            cells[r].ok = 1;
            cells[r].reject_qr = rqr.reject_at.at(0.05) ? 1 : 0;
            cells[r].reject_ivqr = riv.reject_at.at(0.05) ? 1 : 0;
          } catch (const error&) {
            cells[r].ok = 0;
          }
        },
        threads);

    SizePowerRow row;
    row.dial = dial;
    int ok = 0, rq = 0, riv = 0;
    for (const auto& c : cells) {
      ok += c.ok;
      rq += c.reject_qr;
      riv += c.reject_ivqr;
    }
    if (ok == 0) throw solver_error("size_power_study: no replicate completed");
    row.completed = ok;
    row.reject_rate_qr = static_cast<double>(rq) / static_cast<double>(ok);
    row.reject_rate_ivqr = static_cast<double>(riv) / static_cast<double>(ok);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace plvcsar
