#include "plvcsar/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "plvcsar/errors.hpp"
#include "plvcsar/log.hpp"

namespace plvcsar {

void Dataset::validate() const {
  const Eigen::Index nn = y.size();
  if (nn < 1) throw data_error("Dataset: empty response");
  if (X.rows() != nn || Zstar.rows() != nn || U.size() != nn) {
    throw data_error("Dataset: covariate row counts disagree with the response");
  }
  if (W.rows() != nn || W.cols() != nn) {
    throw data_error("Dataset: weight matrix must be n x n");
  }
  if (!y.allFinite() || !X.allFinite() || !Zstar.allFinite() ||
      !U.allFinite() || !W.allFinite()) {
    throw data_error("Dataset: non-finite entries");
  }
  const bool all_zero = W.cwiseAbs().maxCoeff() == 0.0;
  for (Eigen::Index i = 0; i < nn; ++i) {
    if (std::fabs(W(i, i)) > 1e-12) {
      throw data_error("Dataset: weight matrix diagonal must be zero");
    }
    double rs = W.row(i).sum();
    if (!all_zero && std::fabs(rs - 1.0) > 1e-10) {
      std::ostringstream msg;
      msg << "Dataset: weight matrix row " << i << " sums to " << rs
          << " (expected 1)";
      throw data_error(msg.str());
    }
  }
}

Matrix build_weight_matrix(int n, double r) {
  if (n < 2) throw parameter_error("build_weight_matrix: n must be >= 2");
  if (!(r > 0.0 && r < 1.0)) {
    throw parameter_error("build_weight_matrix: r must lie in (0, 1)");
  }
  Matrix W(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      W(i, j) = (i == j) ? 0.0 : std::pow(r, std::abs(i - j));
    }
  }
  for (int i = 0; i < n; ++i) {
    W.row(i) /= W.row(i).sum();
  }
  return W;
}

Vector spatial_lag(const Matrix& W, const Vector& y) {
  if (W.cols() != y.size()) {
    throw data_error("spatial_lag: dimensions disagree");
  }
  return W * y;
}

Dataset with_intercept(const Dataset& dataset) {
  Dataset out = dataset;
  out.X.resize(dataset.n(), dataset.p() + 1);
  out.X.col(0) = Vector::Ones(dataset.n());
  if (dataset.p() > 0) out.X.rightCols(dataset.p()) = dataset.X;
  return out;
}

InstrumentChoice instrument_choice_from_string(const std::string& name) {
  if (name == "wx_wz") return InstrumentChoice::wx_wz;
  if (name == "wx") return InstrumentChoice::wx;
  if (name == "x_z") return InstrumentChoice::x_z;
  throw parameter_error("unknown instrument choice: " + name);
}

std::string to_string(InstrumentChoice choice) {
  switch (choice) {
    case InstrumentChoice::wx_wz: return "wx_wz";
    case InstrumentChoice::wx: return "wx";
    case InstrumentChoice::x_z: return "x_z";
  }
  return "wx_wz";
}

namespace {

Matrix raw_instruments(const Matrix& W, const Matrix& X, const Matrix& Zstar,
                       InstrumentChoice choice) {
  const Eigen::Index n = W.rows();
  switch (choice) {
    case InstrumentChoice::wx_wz: {
      Matrix E(n, X.cols() + Zstar.cols());
      if (X.cols() > 0) E.leftCols(X.cols()) = W * X;
      if (Zstar.cols() > 0) E.rightCols(Zstar.cols()) = W * Zstar;
      return E;
    }
    case InstrumentChoice::wx:
      return W * X;
    case InstrumentChoice::x_z: {
      Matrix E(n, X.cols() + Zstar.cols());
      if (X.cols() > 0) E.leftCols(X.cols()) = X;
      if (Zstar.cols() > 0) E.rightCols(Zstar.cols()) = Zstar;
      return E;
    }
  }
  return Matrix(n, 0);
}

// Keeps the earliest subset of candidate columns that stays independent of
// the fixed block; returns kept column indices.
std::vector<int> independent_columns(const Matrix& fixed, const Matrix& candidates,
                                     double rel_tol) {
  const Eigen::Index n = candidates.rows();
  std::vector<int> kept;
  Matrix work(n, fixed.cols() + candidates.cols());
  Eigen::Index used = fixed.cols();
  if (fixed.cols() > 0) work.leftCols(fixed.cols()) = fixed;
  for (Eigen::Index j = 0; j < candidates.cols(); ++j) {
    work.col(used) = candidates.col(j);
    Eigen::ColPivHouseholderQR<Matrix> qr(work.leftCols(used + 1));
    qr.setThreshold(rel_tol);
    if (qr.rank() == used + 1) {
      kept.push_back(static_cast<int>(j));
      ++used;
    }
  }
  return kept;
}

}  // namespace

InstrumentBlock build_instruments(const Matrix& W, const Matrix& X,
                                  const Matrix& Zstar, InstrumentChoice choice) {
  if (W.rows() != W.cols()) {
    throw data_error("build_instruments: weight matrix must be square");
  }
  if ((X.cols() > 0 && X.rows() != W.rows()) ||
      (Zstar.cols() > 0 && Zstar.rows() != W.rows())) {
    throw data_error("build_instruments: dimensions disagree");
  }
  Matrix raw = raw_instruments(W, X, Zstar, choice);
  std::vector<int> kept = independent_columns(Matrix(W.rows(), 0), raw, 1e-10);
  if (kept.empty()) {
    throw degenerate_design_error("build_instruments: instrument block has rank 0");
  }

  InstrumentBlock block;
  block.E.resize(raw.rows(), static_cast<Eigen::Index>(kept.size()));
  std::size_t next = 0;
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    if (next < kept.size() && kept[next] == static_cast<int>(j)) {
      block.E.col(static_cast<Eigen::Index>(next)) = raw.col(j);
      ++next;
    } else {
      block.dropped_columns.push_back(static_cast<int>(j));
    }
  }
  if (!block.dropped_columns.empty()) {
    std::ostringstream msg;
    msg << "build_instruments: dropped " << block.dropped_columns.size()
        << " collinear instrument column(s)";
    warn(msg.str());
  }
  return block;
}

AssembledDesign assemble_design(const Dataset& dataset, const SplineBasis& basis,
                                InstrumentChoice choice) {
  dataset.validate();
  const Eigen::Index n = dataset.n();
  const Eigen::Index p = dataset.p();

  VaryingCoefBlock pi;
  if (dataset.q() > 0) {
    pi = build_pi(dataset.Zstar, dataset.U, basis);
  } else {
    pi.pi_matrix.resize(n, 0);
  }

  Matrix lead(n, p + pi.q_kn);
  if (p > 0) lead.leftCols(p) = dataset.X;
  if (pi.q_kn > 0) lead.rightCols(pi.q_kn) = pi.pi_matrix;
  if (lead.cols() > 0) {
    Eigen::ColPivHouseholderQR<Matrix> qr(lead);
    qr.setThreshold(1e-10);
    if (qr.rank() < lead.cols()) {
      Eigen::ColPivHouseholderQR<Matrix> qx(dataset.X);
      qx.setThreshold(1e-10);
      const char* block = (p > 0 && qx.rank() < p) ? "X" : "Pi";
      std::ostringstream msg;
      msg << "assemble_design: block " << block << " is rank deficient";
      throw degenerate_design_error(msg.str());
    }
  }

  InstrumentBlock instruments =
      build_instruments(dataset.W, dataset.X, dataset.Zstar, choice);
  std::vector<int> kept = independent_columns(lead, instruments.E, 1e-10);
  if (kept.empty()) {
    throw degenerate_design_error(
        "assemble_design: no instrument column independent of [X, Pi]");
  }

  // Map positions in the repaired block back to raw instrument columns so the
  // drop report uses one consistent index space.
  std::vector<int> raw_of_kept;
  {
    const int raw_cols =
        static_cast<int>(instruments.E.cols() + instruments.dropped_columns.size());
    std::size_t drop_pos = 0;
    for (int j = 0; j < raw_cols; ++j) {
      if (drop_pos < instruments.dropped_columns.size() &&
          instruments.dropped_columns[drop_pos] == j) {
        ++drop_pos;
      } else {
        raw_of_kept.push_back(j);
      }
    }
  }

  AssembledDesign design;
  design.dropped_instruments = instruments.dropped_columns;
  design.E.resize(n, static_cast<Eigen::Index>(kept.size()));
  std::size_t next = 0;
  for (Eigen::Index j = 0; j < instruments.E.cols(); ++j) {
    if (next < kept.size() && kept[next] == static_cast<int>(j)) {
      design.E.col(static_cast<Eigen::Index>(next)) = instruments.E.col(j);
      ++next;
    } else {
      design.dropped_instruments.push_back(raw_of_kept[static_cast<std::size_t>(j)]);
      warn("assemble_design: dropped an instrument column collinear with [X, Pi]");
    }
  }
  std::sort(design.dropped_instruments.begin(), design.dropped_instruments.end());

  design.D = spatial_lag(dataset.W, dataset.y);
  const Eigen::Index m_e = design.E.cols();
  design.X_tilde.resize(n, p + pi.q_kn + m_e);
  if (p > 0) design.X_tilde.leftCols(p) = dataset.X;
  if (pi.q_kn > 0) design.X_tilde.middleCols(p, pi.q_kn) = pi.pi_matrix;
  design.X_tilde.rightCols(m_e) = design.E;
  design.blocks.x_begin = 0;
  design.blocks.x_count = static_cast<int>(p);
  design.blocks.pi_begin = static_cast<int>(p);
  design.blocks.pi_count = pi.q_kn;
  design.blocks.e_begin = static_cast<int>(p) + pi.q_kn;
  design.blocks.e_count = static_cast<int>(m_e);
  return design;
}

}  // namespace plvcsar
