#include "plvcsar/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "plvcsar/errors.hpp"

namespace plvcsar {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_double(const std::string& s, const std::string& path, int line_no) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    std::ostringstream msg;
    msg << path << ":" << line_no << ": cannot parse '" << s << "' as a number";
    throw data_error(msg.str());
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Matrix read_weight_matrix(const std::string& path, Eigen::Index expected_n) {
  std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) throw data_error(path + ": empty weight file");

  std::vector<std::string> head = split_csv_line(lines[0]);
  const bool triplet = head.size() == 3 && head[0] == "i" && head[1] == "j" &&
                       head[2] == "w";

  Matrix W = Matrix::Zero(expected_n, expected_n);
  if (triplet) {
    for (std::size_t k = 1; k < lines.size(); ++k) {
      if (trim(lines[k]).empty()) continue;
      std::vector<std::string> f = split_csv_line(lines[k]);
      int line_no = static_cast<int>(k) + 1;
      if (f.size() != 3) {
        std::ostringstream msg;
        msg << path << ":" << line_no << ": expected 3 fields (i,j,w)";
        throw data_error(msg.str());
      }
      double di = parse_double(f[0], path, line_no);
      double dj = parse_double(f[1], path, line_no);
      Eigen::Index i = static_cast<Eigen::Index>(di);
      Eigen::Index j = static_cast<Eigen::Index>(dj);
      if (i < 0 || i >= expected_n || j < 0 || j >= expected_n) {
        std::ostringstream msg;
        msg << path << ":" << line_no << ": index (" << i << "," << j
            << ") outside 0.." << expected_n - 1;
        throw data_error(msg.str());
      }
      W(i, j) = parse_double(f[2], path, line_no);
    }
    return W;
  }

  Eigen::Index row = 0;
  for (std::size_t k = 0; k < lines.size(); ++k) {
    if (trim(lines[k]).empty()) continue;
    int line_no = static_cast<int>(k) + 1;
    if (row >= expected_n) {
      std::ostringstream msg;
      msg << path << ":" << line_no << ": more than " << expected_n << " rows";
      throw data_error(msg.str());
    }
    std::vector<std::string> f = split_csv_line(lines[k]);
    if (static_cast<Eigen::Index>(f.size()) != expected_n) {
      std::ostringstream msg;
      msg << path << ":" << line_no << ": expected " << expected_n
          << " columns, found " << f.size();
      throw data_error(msg.str());
    }
    for (Eigen::Index j = 0; j < expected_n; ++j) {
      W(row, j) = parse_double(f[static_cast<std::size_t>(j)], path, line_no);
    }
    ++row;
  }
  if (row != expected_n) {
    std::ostringstream msg;
    msg << path << ": expected " << expected_n << " rows, found " << row;
    throw data_error(msg.str());
  }
  return W;
}

Dataset read_dataset_csv(const std::string& data_path,
                         const std::string& weights_path) {
  std::vector<std::string> lines = read_lines(data_path);
  if (lines.empty()) throw data_error(data_path + ": empty dataset file");

  std::vector<std::string> header = split_csv_line(lines[0]);
  int y_col = -1, u_col = -1;
  std::vector<int> x_cols, z_cols;
  auto find_indexed = [&](const std::string& name, char prefix,
                          std::vector<int>& cols, std::size_t col_idx) {
    if (name.size() > 1 && name[0] == prefix) {
      int idx = 0;
      try {
        idx = std::stoi(name.substr(1));
      } catch (const std::exception&) {
        throw data_error(data_path + ":1: unrecognized column '" + name + "'");
      }
      if (idx < 1) {
        throw data_error(data_path + ":1: column numbering starts at 1");
      }
      if (static_cast<std::size_t>(idx) > cols.size()) {
        cols.resize(static_cast<std::size_t>(idx), -1);
      }
      cols[static_cast<std::size_t>(idx - 1)] = static_cast<int>(col_idx);
      return true;
    }
    return false;
  };
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& name = header[c];
    if (name == "y") {
      y_col = static_cast<int>(c);
    } else if (name == "u") {
      u_col = static_cast<int>(c);
    } else if (!find_indexed(name, 'x', x_cols, c) &&
               !find_indexed(name, 'z', z_cols, c)) {
      throw data_error(data_path + ":1: unrecognized column '" + name +
                       "' (expected y, x1..xp, z1..zq, u)");
    }
  }
  if (y_col < 0) throw data_error(data_path + ":1: missing column 'y'");
  if (u_col < 0) throw data_error(data_path + ":1: missing column 'u'");
  for (std::size_t j = 0; j < x_cols.size(); ++j) {
    if (x_cols[j] < 0) {
      std::ostringstream msg;
      msg << data_path << ":1: missing column 'x" << j + 1 << "'";
      throw data_error(msg.str());
    }
  }
  for (std::size_t j = 0; j < z_cols.size(); ++j) {
    if (z_cols[j] < 0) {
      std::ostringstream msg;
      msg << data_path << ":1: missing column 'z" << j + 1 << "'";
      throw data_error(msg.str());
    }
  }

  std::vector<std::vector<double>> rows;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    if (trim(lines[k]).empty()) continue;
    int line_no = static_cast<int>(k) + 1;
    std::vector<std::string> f = split_csv_line(lines[k]);
    if (f.size() != header.size()) {
      std::ostringstream msg;
      msg << data_path << ":" << line_no << ": expected " << header.size()
          << " fields, found " << f.size();
      throw data_error(msg.str());
    }
    std::vector<double> vals(f.size());
    for (std::size_t c = 0; c < f.size(); ++c) {
      vals[c] = parse_double(f[c], data_path, line_no);
    }
    rows.push_back(std::move(vals));
  }
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  if (n < 1) throw data_error(data_path + ": no data rows");

  Dataset ds;
  ds.y.resize(n);
  ds.U.resize(n);
  ds.X.resize(n, static_cast<Eigen::Index>(x_cols.size()));
  ds.Zstar.resize(n, static_cast<Eigen::Index>(z_cols.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    ds.y(i) = row[static_cast<std::size_t>(y_col)];
    ds.U(i) = row[static_cast<std::size_t>(u_col)];
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
      ds.X(i, static_cast<Eigen::Index>(j)) = row[static_cast<std::size_t>(x_cols[j])];
    }
    for (std::size_t j = 0; j < z_cols.size(); ++j) {
      ds.Zstar(i, static_cast<Eigen::Index>(j)) =
          row[static_cast<std::size_t>(z_cols[j])];
    }
  }
  ds.W = read_weight_matrix(weights_path, n);
  ds.validate();
  return ds;
}

void write_dataset_csv(const Dataset& dataset, const std::string& data_path,
                       const std::string& weights_path) {
  std::ofstream out(data_path);
  if (!out) throw data_error("cannot write file: " + data_path);
  out << "y";
  for (Eigen::Index j = 0; j < dataset.p(); ++j) out << ",x" << j + 1;
  for (Eigen::Index j = 0; j < dataset.q(); ++j) out << ",z" << j + 1;
  out << ",u\n";
  for (Eigen::Index i = 0; i < dataset.n(); ++i) {
    out << format_double(dataset.y(i));
    for (Eigen::Index j = 0; j < dataset.p(); ++j) {
      out << ',' << format_double(dataset.X(i, j));
    }
    for (Eigen::Index j = 0; j < dataset.q(); ++j) {
      out << ',' << format_double(dataset.Zstar(i, j));
    }
    out << ',' << format_double(dataset.U(i)) << '\n';
  }

  std::ofstream wout(weights_path);
  if (!wout) throw data_error("cannot write file: " + weights_path);
  for (Eigen::Index i = 0; i < dataset.n(); ++i) {
    for (Eigen::Index j = 0; j < dataset.n(); ++j) {
      if (j > 0) wout << ',';
      wout << format_double(dataset.W(i, j));
    }
    wout << '\n';
  }
}

namespace {

nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

nlohmann::json to_json(const IvqrEstimate& estimate) {
  nlohmann::json j;
  j["tau"] = estimate.tau;
  j["rho_hat"] = estimate.rho_hat;
  j["beta_hat"] = vector_to_json(estimate.beta_hat);
  j["theta_hat"] = vector_to_json(estimate.theta_hat);
  j["zeta_hat"] = vector_to_json(estimate.zeta_hat);
  j["objective"] = estimate.objective;
  j["k_n"] = estimate.basis.interior_knot_count;
  j["degree"] = estimate.basis.degree;
  j["knots"] = vector_to_json(estimate.basis.knots);
  j["basis_dim"] = estimate.basis.basis_dim();
  j["p"] = estimate.p;
  j["q"] = estimate.q;
  j["m_E"] = estimate.m_E;
  nlohmann::json profile = nlohmann::json::array();
  for (const auto& pt : estimate.profile) {
    profile.push_back({{"rho", pt.rho},
                       {"zeta_norm", pt.zeta_norm},
                       {"objective", pt.objective}});
  }
  j["profile"] = profile;
  return j;
}

nlohmann::json to_json(const RankScoreResult& result) {
  nlohmann::json j;
  j["statistic"] = result.statistic;
  j["df"] = result.df;
  j["reference"] = (result.reference == ReferenceDist::chi_square)
                       ? "chi_square"
                       : "normal_approx";
  j["p_value"] = result.p_value;
  nlohmann::json rej;
  for (const auto& [level, decision] : result.reject_at) {
    rej[format_double(level)] = decision;
  }
  j["reject_at"] = rej;
  j["bandwidth"] = result.bandwidth;
  return j;
}

nlohmann::json to_json(const ConfidenceIntervals& ci) {
  nlohmann::json j;
  j["alpha"] = ci.alpha;
  j["rate"] = (ci.rate == CiRate::sqrt_n) ? "sqrt_n" : "paper_n";
  j["rho"] = {{"lower", ci.rho.lower}, {"upper", ci.rho.upper}};
  nlohmann::json beta = nlohmann::json::array();
  for (const auto& iv : ci.beta) {
    beta.push_back({{"lower", iv.lower}, {"upper", iv.upper}});
  }
  j["beta"] = beta;
  j["u_grid"] = vector_to_json(ci.u_grid);
  nlohmann::json bands = nlohmann::json::array();
  for (const auto& band : ci.gamma_bands) {
    nlohmann::json one = nlohmann::json::array();
    for (const auto& iv : band) {
      one.push_back({{"lower", iv.lower}, {"upper", iv.upper}});
    }
    bands.push_back(one);
  }
  j["gamma_bands"] = bands;
  return j;
}

nlohmann::json to_json(const CovarianceBundle& bundle) {
  nlohmann::json j;
  j["bandwidth"] = bundle.bandwidth;
  j["var_rho"] = bundle.var_rho;
  j["omega_diag"] = vector_to_json(bundle.omega_diag);
  j["J_eta"] = matrix_to_json(bundle.J_eta);
  j["J_rho"] = vector_to_json(bundle.J_rho);
  j["S"] = matrix_to_json(bundle.S);
  j["H"] = matrix_to_json(bundle.H);
  j["K"] = vector_to_json(bundle.K);
  j["M"] = matrix_to_json(bundle.M);
  j["L1"] = matrix_to_json(bundle.L1);
  j["L2"] = matrix_to_json(bundle.L2);
  j["Lambda_beta"] = matrix_to_json(bundle.Lambda_beta);
  nlohmann::json theta_cov = nlohmann::json::array();
  for (const auto& v : bundle.theta_cov_per_l) theta_cov.push_back(matrix_to_json(v));
  j["theta_cov_per_l"] = theta_cov;
  nlohmann::json curves = nlohmann::json::array();
  for (const auto& v : bundle.gamma_var_at_sample) curves.push_back(vector_to_json(v));
  j["gamma_var_at_sample"] = curves;
  return j;
}

nlohmann::json to_json(const MonteCarloReport& report) {
  nlohmann::json j;
  j["requested"] = report.requested;
  j["completed"] = report.completed;
  j["failed"] = report.failed;
  j["rho"] = {{"bias", report.rho.bias}, {"rmse", report.rho.rmse}};
  nlohmann::json beta = nlohmann::json::array();
  for (const auto& s : report.beta) {
    beta.push_back({{"bias", s.bias}, {"rmse", s.rmse}});
  }
  j["beta"] = beta;
  j["made_gamma"] = report.made_gamma;
  j["spec"] = {{"example", to_string(report.spec.example)},
               {"n", report.spec.n},
               {"tau", report.spec.tau},
               {"rho", report.spec.rho},
               {"beta", report.spec.beta},
               {"eta", report.spec.eta},
               {"weight_r", report.spec.weight_r},
               {"seed", report.spec.seed}};
  return j;
}

}  // namespace plvcsar
