#pragma once

#include <stdexcept>
#include <string>

namespace plvcsar {

// Base class for every error thrown by the library.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A parameter lies outside its mathematical domain (tau, rho, bandwidth, ...).
class parameter_error : public error {
 public:
  using error::error;
};

// Malformed input: parse failures, dimension mismatches, non-finite values.
class data_error : public error {
 public:
  using error::error;
};

// A design matrix (or one of its blocks) is numerically rank deficient.
class degenerate_design_error : public error {
 public:
  using error::error;
};

// An iterative solver failed to converge; the message carries diagnostics.
class solver_error : public error {
 public:
  using error::error;
};

// A matrix required to be invertible is numerically singular.
class singular_matrix_error : public error {
 public:
  using error::error;
};

}  // namespace plvcsar
