#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "plvcsar/spline.hpp"
#include "plvcsar/stats.hpp"

namespace plvcsar {

// One spatial cross-section: response, linear-part covariates, varying-part
// covariates, smoothing variable, and a row-normalized weight matrix.
struct Dataset {
  Vector y;      // n
  Matrix X;      // n x p (p may be 0)
  Matrix Zstar;  // n x q (q may be 0)
  Vector U;      // n
  Matrix W;      // n x n, zero diagonal, rows sum to 1 (or all-zero)

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return X.cols(); }
  Eigen::Index q() const { return Zstar.cols(); }

  void validate() const;
};

//! Inverse-distance-decay weights w_ij = r^|i-j| off the diagonal, then each
//! row scaled to sum to one.
Matrix build_weight_matrix(int n, double r);

//! W * y; the zero matrix yields the zero vector.
Vector spatial_lag(const Matrix& W, const Vector& y);

//! Copy of the dataset with a constant column prepended to X.
Dataset with_intercept(const Dataset& dataset);

enum class InstrumentChoice { wx_wz, wx, x_z };

InstrumentChoice instrument_choice_from_string(const std::string& name);
std::string to_string(InstrumentChoice choice);

struct InstrumentBlock {
  Matrix E;                        // n x m_E after rank repair
  std::vector<int> dropped_columns;  // 0-based indices into the raw block
};

//! Spatially lagged exogenous covariates used to instrument the spatial lag.
//! Collinear columns are dropped left-to-right (the kept set is the earliest
//! maximal independent subset); an empty result is an error.
InstrumentBlock build_instruments(const Matrix& W, const Matrix& X,
                                  const Matrix& Zstar,
                                  InstrumentChoice choice = InstrumentChoice::wx_wz);

struct BlockIndex {
  int x_begin = 0, x_count = 0;
  int pi_begin = 0, pi_count = 0;
  int e_begin = 0, e_count = 0;
};

struct AssembledDesign {
  Vector D;        // spatial lag W y
  Matrix X_tilde;  // [X, Pi, E], full column rank
  Matrix E;        // instrument block actually used
  BlockIndex blocks;
  std::vector<int> dropped_instruments;  // raw instrument columns removed

  Eigen::Index n() const { return X_tilde.rows(); }
  Eigen::Index m() const { return X_tilde.cols(); }
};

//! Builds the full design [X, Pi, E] with the spline block evaluated on the
//! dataset's smoothing variable. Instrument columns that are collinear with
//! the leading blocks are dropped (warned); rank deficiency inside [X, Pi]
//! is an error naming the offending block.
AssembledDesign assemble_design(const Dataset& dataset, const SplineBasis& basis,
                                InstrumentChoice choice = InstrumentChoice::wx_wz);

}  // namespace plvcsar
