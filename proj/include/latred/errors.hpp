#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace latred {

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed scenario or matrix file.
struct ParseError : Error {
  using Error::Error;
};

/// File could not be read or written.
struct IoError : Error {
  using Error::Error;
};

/// Invalid lattice definition (disconnected structure, empty load set, ...).
struct ModelError : Error {
  using Error::Error;
};

/// The full tangent operator could not be factorized.
struct SingularTangent : Error {
  using Error::Error;
};

/// The load-control iteration could not reach the prescribed damage increment.
struct ControlFailure : Error {
  using Error::Error;
};

/// A Newton loop exhausted its iteration budget.
struct NonConvergence : Error {
  using Error::Error;
};

/// K^(rr) is rank deficient against the current tangent. Carries the
/// directions worth keeping so the caller can re-filter the basis.
struct SingularReducedBlock : Error {
  explicit SingularReducedBlock(std::string msg, Eigen::MatrixXd keep_directions)
      : Error(std::move(msg)), keep(std::move(keep_directions)) {}
  Eigen::MatrixXd keep;
};

/// Conjugate gradient hit a non-positive curvature term: the condensed
/// operator is not positive definite.
struct KrylovBreakdown : Error {
  using Error::Error;
};

}  // namespace latred
