// Command-line driver: fits partially linear varying-coefficient spatial
// autoregressive quantile models on CSV data, runs rank score tests, and
// reproduces the simulation studies.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "plvcsar/errors.hpp"
#include "plvcsar/io.hpp"
#include "plvcsar/ivqr.hpp"
#include "plvcsar/log.hpp"
#include "plvcsar/ranktest.hpp"
#include "plvcsar/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace plvcsar;

namespace {

struct CommonOptions {
  std::vector<double> taus{0.5};
  std::string data_path;
  std::string weights_path;
  std::string knots = "auto";
  std::string rho_grid = "-0.99:0.99:0.01";
  std::string instruments = "wx_wz";
  std::string ci_rate = "sqrt_n";
  std::string format = "json";
  std::string out_dir = "out";
  double alpha = 0.05;
  int reps = 1000;
  std::uint64_t seed = 12345;
  int threads = 0;
  double bandwidth_multiplier = 0.6;
  std::string density_rule = "hall_sheather";
};

RhoGrid parse_rho_grid(const std::string& text) {
  RhoGrid grid;
  std::stringstream ss(text);
  std::string part;
  std::vector<double> vals;
  while (std::getline(ss, part, ':')) vals.push_back(std::stod(part));
  if (vals.size() != 3) {
    throw parameter_error("--rho-grid expects lo:hi:step");
  }
  grid.lo = vals[0];
  grid.hi = vals[1];
  grid.step = vals[2];
  (void)grid.points();  // validates
  return grid;
}

IvqrConfig make_config(const CommonOptions& opt, double tau) {
  IvqrConfig cfg;
  cfg.tau = tau;
  cfg.rho_grid = parse_rho_grid(opt.rho_grid);
  cfg.instruments = instrument_choice_from_string(opt.instruments);
  if (opt.knots != "auto") {
    int k = std::stoi(opt.knots);
    if (k < 0) throw parameter_error("--knots must be 'auto' or a nonnegative count");
    cfg.k_n = k;
  }
  if (opt.ci_rate == "sqrt_n") {
    cfg.ci_rate = CiRate::sqrt_n;
  } else if (opt.ci_rate == "paper_n") {
    cfg.ci_rate = CiRate::paper_n;
  } else {
    throw parameter_error("--ci-rate must be sqrt_n or paper_n");
  }
  cfg.density.multiplier = opt.bandwidth_multiplier;
  if (opt.density_rule == "hall_sheather") {
    cfg.density.rule = stats::BandwidthRule::hall_sheather;
  } else if (opt.density_rule == "bofinger") {
    cfg.density.rule = stats::BandwidthRule::bofinger;
  } else {
    throw parameter_error("--bandwidth-rule must be hall_sheather or bofinger");
  }
  return cfg;
}

void validate_taus(const std::vector<double>& taus) {
  if (taus.empty()) throw parameter_error("at least one --tau is required");
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0 && taus[i] < 1.0)) {
      throw parameter_error("every tau must lie in (0, 1)");
    }
    if (i > 0 && taus[i] <= taus[i - 1]) {
      throw parameter_error("tau list must be strictly increasing");
    }
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write file: " + path.string());
  out << text;
}

std::string tau_tag(double tau) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", tau);
  return buf;
}

int cmd_fit(const CommonOptions& opt) {
  validate_taus(opt.taus);
  Dataset ds = read_dataset_csv(opt.data_path, opt.weights_path);
  fs::create_directories(opt.out_dir);

  std::ostringstream curves;
  curves << "tau,coefficient,u,gamma_hat,lower,upper\n";
  std::ostringstream cis;
  cis << "tau,parameter,estimate,lower,upper\n";

  for (double tau : opt.taus) {
    IvqrConfig cfg = make_config(opt, tau);
    IvqrEstimate est = estimate(ds, cfg);
    AssembledDesign design = assemble_design(ds, est.basis, cfg.instruments);
    CovarianceBundle bundle = asymptotic_cov(est, design, ds.y, ds.U, cfg);
    Vector ugrid = Vector::LinSpaced(100, est.basis.u_min(), est.basis.u_max());
    ConfidenceIntervals ci =
        confidence_intervals(est, bundle, opt.alpha, ugrid, cfg.ci_rate);

    json report = to_json(est);
    report["confidence"] = to_json(ci);
    report["covariance"] = to_json(bundle);
    write_text(fs::path(opt.out_dir) / ("estimate_tau" + tau_tag(tau) + ".json"),
               report.dump(2) + "\n");

    cis << tau << ",rho," << format_double(est.rho_hat) << ','
        << format_double(ci.rho.lower) << ',' << format_double(ci.rho.upper)
        << '\n';
    for (Eigen::Index j = 0; j < est.beta_hat.size(); ++j) {
      cis << tau << ",beta" << j + 1 << ',' << format_double(est.beta_hat(j))
          << ',' << format_double(ci.beta[static_cast<std::size_t>(j)].lower)
          << ',' << format_double(ci.beta[static_cast<std::size_t>(j)].upper)
          << '\n';
    }
    for (int l = 0; l < est.q; ++l) {
      for (Eigen::Index k = 0; k < ugrid.size(); ++k) {
        const Interval& band = ci.gamma_bands[static_cast<std::size_t>(l)]
                                             [static_cast<std::size_t>(k)];
        curves << tau << ",gamma" << l + 1 << ',' << format_double(ugrid(k))
               << ',' << format_double(eval_varying_coef(est, l, ugrid(k)))
               << ',' << format_double(band.lower) << ','
               << format_double(band.upper) << '\n';
      }
    }
  }
  write_text(fs::path(opt.out_dir) / "gamma_curves.csv", curves.str());
  write_text(fs::path(opt.out_dir) / "ci_table.csv", cis.str());
  std::cout << "wrote estimates for " << opt.taus.size() << " quantile(s) to "
            << opt.out_dir << "\n";
  return 0;
}

int cmd_test(const CommonOptions& opt, const std::vector<int>& beta_cols,
             const std::vector<int>& constancy_cols, const std::string& estimator) {
  validate_taus(opt.taus);
  if (beta_cols.empty() && constancy_cols.empty()) {
    std::cerr << "usage error: specify a hypothesis with --beta-cols and/or "
                 "--constancy-cols\n";
    return 2;
  }
  Dataset ds = read_dataset_csv(opt.data_path, opt.weights_path);
  fs::create_directories(opt.out_dir);

  RankTestConfig tcfg;
  if (estimator == "ivqr") {
    tcfg.estimator = NullEstimator::ivqr;
  } else if (estimator == "qr") {
    tcfg.estimator = NullEstimator::naive_qr;
  } else {
    throw parameter_error("--estimator must be ivqr or qr");
  }

  json results = json::array();
  std::ostringstream wide;
  std::ostringstream lines;
  lines << "tau,hypothesis,statistic,df,reference,p_value,cutoff_05,reject_05\n";
  wide << "tau";
  for (int c : beta_cols) wide << ",H0_beta" << c;
  for (int c : constancy_cols) wide << ",H0_gamma" << c;
  wide << '\n';

  for (double tau : opt.taus) {
    IvqrConfig cfg = make_config(opt, tau);
    tcfg.base = cfg;
    int k = cfg.k_n.value_or(-1);
    if (k < 0) k = select_knots(ds, tau, default_knot_candidates(ds.n()), cfg);
    SplineBasis basis = make_knots(ds.U, k, cfg.degree);

    wide << tau;
    auto run_one = [&](const std::string& label, bool constancy, int col) {
      std::vector<int> tested{col - 1};  // user-facing columns are 1-based
      RankScoreResult res = constancy
                                ? rs_constancy_test(ds, basis, tested, tcfg)
                                : rs_beta_test(ds, basis, tested, tcfg);
      double cutoff = (res.reference == ReferenceDist::chi_square)
                          ? stats::chi2_quantile(0.95, res.df)
                          : stats::norm_quantile(0.95);
      json row = to_json(res);
      row["tau"] = tau;
      row["hypothesis"] = label;
      row["cutoff_05"] = cutoff;
      results.push_back(row);
      lines << tau << ',' << label << ',' << format_double(res.statistic) << ','
            << res.df << ','
            << (res.reference == ReferenceDist::chi_square ? "chi_square"
                                                           : "normal_approx")
            << ',' << format_double(res.p_value) << ',' << format_double(cutoff)
            << ',' << (res.reject_at.at(0.05) ? 1 : 0) << '\n';
      char cell[64];
      std::snprintf(cell, sizeof(cell), ",%.4f%s", res.statistic,
                    res.reject_at.at(0.05) ? " *" : "");
      wide << cell;
    };
    for (int c : beta_cols) run_one("beta" + std::to_string(c), false, c);
    for (int c : constancy_cols) run_one("gamma" + std::to_string(c), true, c);
    wide << '\n';
  }

  if (opt.format == "csv") {
    write_text(fs::path(opt.out_dir) / "tests.csv", lines.str());
  } else {
    write_text(fs::path(opt.out_dir) / "tests.json", json(results).dump(2) + "\n");
  }
  write_text(fs::path(opt.out_dir) / "tests_wide.csv", wide.str());
  std::cout << wide.str();
  return 0;
}

json report_to_row(const MonteCarloReport& rep, const std::string& estimator,
                   double tau) {
  json row = to_json(rep);
  row["estimator"] = estimator;
  row["tau"] = tau;
  return row;
}

int cmd_simulate(const CommonOptions& opt, const std::string& preset,
                 const std::string& example, int n, const std::string& write_data) {
  fs::create_directories(opt.out_dir);
  DgpSpec spec;
  spec.example = dgp_example_from_string(example);
  spec.n = n;
  spec.seed = opt.seed;

  if (!write_data.empty()) {
    spec.tau = opt.taus.front();
    Dataset ds = generate(spec);
    write_dataset_csv(ds, write_data + "_data.csv", write_data + "_weights.csv");
    std::cout << "wrote " << write_data << "_data.csv and _weights.csv\n";
    if (preset.empty()) return 0;
  }

  if (preset == "table1") {
    std::ostringstream csv;
    csv << "underlying,fitted,tau,rho_bias,rho_rmse,beta_bias,beta_rmse\n";
    for (double tau : opt.taus) {
      spec.tau = tau;
      IvqrConfig cfg = make_config(opt, tau);
      if (!cfg.k_n) cfg.k_n = 2;
      auto cells = run_model_comparison(spec, opt.reps, cfg, opt.threads);
      for (const auto& cell : cells) {
        csv << cell.underlying << ',' << cell.fitted << ',' << tau << ','
            << cell.report.rho.bias << ',' << cell.report.rho.rmse << ','
            << cell.report.beta[0].bias << ',' << cell.report.beta[0].rmse << '\n';
      }
    }
    write_text(fs::path(opt.out_dir) / "table1.csv", csv.str());
    std::cout << csv.str();
    return 0;
  }

  if (preset == "table2" || preset == "table3" || preset.empty()) {
    if (preset == "table2") spec.example = DgpExample::ex1_plvc;
    if (preset == "table3") spec.example = DgpExample::ex2_plvc_hetero;
    std::ostringstream csv;
    csv << "example,n,tau,estimator,rho_bias,rho_rmse,beta_bias,beta_rmse,"
           "made_gamma1,made_gamma2,completed\n";
    json rows = json::array();
    for (double tau : opt.taus) {
      spec.tau = tau;
      IvqrConfig cfg = make_config(opt, tau);
      // Fixed preset knot counts near the SIC mode of each design.
      if (!cfg.k_n) cfg.k_n = (preset == "table3") ? 1 : 2;
      for (auto kind : {EstimatorKind::naive_qr, EstimatorKind::ivqr}) {
        McOptions mopt;
        mopt.estimator = kind;
        mopt.threads = opt.threads;
        MonteCarloReport rep = run_monte_carlo(spec, opt.reps, cfg, mopt);
        const char* label = (kind == EstimatorKind::ivqr) ? "ivqr" : "qr";
        csv << to_string(spec.example) << ',' << spec.n << ',' << tau << ','
            << label << ',' << rep.rho.bias << ',' << rep.rho.rmse << ','
            << rep.beta[0].bias << ',' << rep.beta[0].rmse << ','
            << rep.made_gamma[0] << ',' << rep.made_gamma[1] << ','
            << rep.completed << '\n';
        rows.push_back(report_to_row(rep, label, tau));
      }
    }
    std::string name = preset.empty() ? "monte_carlo" : preset;
    write_text(fs::path(opt.out_dir) / (name + ".csv"), csv.str());
    if (opt.format == "json") {
      write_text(fs::path(opt.out_dir) / (name + ".json"), rows.dump(2) + "\n");
    }
    std::cout << csv.str();
    return 0;
  }

  if (preset == "table4") {
    std::vector<double> dials = {0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5};
    std::ostringstream csv;
    csv << "test,tau,dial,reject_qr,reject_ivqr,completed\n";
    for (double tau : opt.taus) {
      spec.tau = tau;
      RankTestConfig tcfg;
      tcfg.base = make_config(opt, tau);
      if (!tcfg.base.k_n) tcfg.base.k_n = 2;
      auto beta_rows =
          size_power_study(TestKind::beta, dials, spec, opt.reps, tcfg, opt.threads);
      for (const auto& row : beta_rows) {
        csv << "beta," << tau << ',' << row.dial << ',' << row.reject_rate_qr
            << ',' << row.reject_rate_ivqr << ',' << row.completed << '\n';
      }
      auto c_rows = size_power_study(TestKind::constancy, dials, spec, opt.reps,
                                     tcfg, opt.threads);
      for (const auto& row : c_rows) {
        csv << "constancy," << tau << ',' << row.dial << ','
            << row.reject_rate_qr << ',' << row.reject_rate_ivqr << ','
            << row.completed << '\n';
      }
    }
    write_text(fs::path(opt.out_dir) / "table4.csv", csv.str());
    std::cout << csv.str();
    return 0;
  }

  if (preset == "figure1") {
    spec.tau = opt.taus.front();
    Dataset raw = generate(spec);
    Dataset ds = with_intercept(raw);
    IvqrConfig cfg = make_config(opt, spec.tau);
    if (!cfg.k_n) cfg.k_n = 2;
    SplineBasis basis = make_knots(ds.U, *cfg.k_n, cfg.degree);
    AssembledDesign design = assemble_design(ds, basis, cfg.instruments);
    IvqrEstimate est = estimate_on_design(ds.y, design, basis, cfg, &ds);
    CovarianceBundle bundle = asymptotic_cov(est, design, ds.y, ds.U, cfg);
    Vector ugrid = Vector::LinSpaced(100, basis.u_min(), basis.u_max());
    ConfidenceIntervals ci =
        confidence_intervals(est, bundle, opt.alpha, ugrid, cfg.ci_rate);
    std::ostringstream csv;
    csv << "u,truth1,estimate1,lower1,upper1,truth2,estimate2,lower2,upper2\n";
    for (Eigen::Index k = 0; k < ugrid.size(); ++k) {
      double u = ugrid(k);
      csv << format_double(u);
      for (int l = 0; l < 2; ++l) {
        double truth = (l == 0) ? gamma1_truth(spec, u) : gamma2_truth(spec, u);
        const Interval& band =
            ci.gamma_bands[static_cast<std::size_t>(l)][static_cast<std::size_t>(k)];
        csv << ',' << format_double(truth) << ','
            << format_double(eval_varying_coef(est, l, u)) << ','
            << format_double(band.lower) << ',' << format_double(band.upper);
      }
      csv << '\n';
    }
    write_text(fs::path(opt.out_dir) / "figure1_bands.csv", csv.str());
    std::cout << "wrote figure1_bands.csv\n";
    return 0;
  }

  std::cerr << "usage error: unknown preset '" << preset
            << "' (valid: table1, table2, table3, table4, figure1)\n";
  return 2;
}

int cmd_knots(const CommonOptions& opt) {
  validate_taus(opt.taus);
  Dataset ds = read_dataset_csv(opt.data_path, opt.weights_path);
  fs::create_directories(opt.out_dir);
  json out = json::array();
  for (double tau : opt.taus) {
    IvqrConfig cfg = make_config(opt, tau);
    std::vector<int> candidates = default_knot_candidates(ds.n());
    json per_tau;
    per_tau["tau"] = tau;
    json table = json::array();
    for (int k : candidates) {
      IvqrConfig sub = cfg;
      sub.k_n = k;
      try {
        IvqrEstimate fit = estimate(ds, sub);
        int q_kn = fit.basis.basis_dim() * fit.q;
        double value = sic_penalized(fit.objective, static_cast<int>(ds.n()),
                                     1 + fit.p + q_kn + fit.m_E);
        table.push_back({{"k_n", k}, {"sic", value}, {"objective", fit.objective}});
      } catch (const error&) {
        table.push_back({{"k_n", k}, {"sic", nullptr}});
      }
    }
    per_tau["candidates"] = table;
    int chosen = select_knots(ds, tau, candidates, cfg);
    per_tau["selected"] = chosen;
    out.push_back(per_tau);
    std::cout << "tau " << tau << ": selected k_n = " << chosen << "\n";
  }
  write_text(fs::path(opt.out_dir) / "knots.json", out.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instrumental-variable quantile regression for partially linear "
               "varying-coefficient spatial autoregressive models"};
  app.set_config("--config", "", "key=value configuration file; flags override");

  CommonOptions opt;
  app.add_option("--tau", opt.taus, "quantile levels, strictly increasing");
  app.add_option("--knots", opt.knots, "'auto' or an interior knot count");
  app.add_option("--rho-grid", opt.rho_grid, "grid lo:hi:step");
  app.add_option("--instruments", opt.instruments, "wx_wz | wx | x_z");
  app.add_option("--ci-rate", opt.ci_rate, "sqrt_n | paper_n");
  app.add_option("--reps", opt.reps, "Monte Carlo replicates");
  app.add_option("--seed", opt.seed, "base seed");
  app.add_option("--out", opt.out_dir, "output directory");
  app.add_option("--format", opt.format, "json | csv summaries");
  app.add_option("--alpha", opt.alpha, "significance level for intervals");
  app.add_option("--threads", opt.threads, "worker threads (0 = all cores)");
  app.add_option("--bandwidth-multiplier", opt.bandwidth_multiplier,
                 "scale on the density bandwidth");
  app.add_option("--bandwidth-rule", opt.density_rule,
                 "hall_sheather | bofinger");
  app.add_flag_callback("--quiet", [] { set_warnings_enabled(false); },
                        "suppress warnings");

  auto* fit = app.add_subcommand("fit", "fit the model on CSV data");
  fit->add_option("--data", opt.data_path, "dataset CSV")->required();
  fit->add_option("--weights", opt.weights_path, "weight matrix CSV")->required();

  std::vector<int> beta_cols, constancy_cols;
  std::string estimator = "ivqr";
  auto* test = app.add_subcommand("test", "rank score hypothesis tests");
  test->add_option("--data", opt.data_path, "dataset CSV")->required();
  test->add_option("--weights", opt.weights_path, "weight matrix CSV")->required();
  test->add_option("--beta-cols", beta_cols,
                   "1-based x columns to test for zero coefficients");
  test->add_option("--constancy-cols", constancy_cols,
                   "1-based z columns to test for constancy");
  test->add_option("--estimator", estimator, "null-fit estimator: ivqr | qr");

  std::string preset, example = "ex1", write_data;
  int sim_n = 100;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo studies");
  sim->add_option("--preset", preset, "table1 | table2 | table3 | table4 | figure1");
  sim->add_option("--example", example, "ex1 | ex2 | ex1_sar | ex2_sar");
  sim->add_option("--n", sim_n, "sample size");
  sim->add_option("--write-data", write_data,
                  "also write one generated dataset under this path prefix");

  auto* knots = app.add_subcommand("knots", "SIC knot selection report");
  knots->add_option("--data", opt.data_path, "dataset CSV")->required();
  knots->add_option("--weights", opt.weights_path, "weight matrix CSV")->required();

  // Global options may appear after the subcommand name.
  for (auto* sub : {fit, test, sim, knots}) sub->fallthrough();
  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*fit) return cmd_fit(opt);
    if (*test) return cmd_test(opt, beta_cols, constancy_cols, estimator);
    if (*sim) return cmd_simulate(opt, preset, example, sim_n, write_data);
    if (*knots) return cmd_knots(opt);
  } catch (const parameter_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
