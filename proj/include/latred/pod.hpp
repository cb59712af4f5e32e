#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "latred/errors.hpp"

namespace latred {

/// Column store of solution vectors with per-column provenance labels.
struct SnapshotMatrix {
  Eigen::MatrixXd columns;  // n_u x n_s
  std::vector<std::string> labels;

  int rows() const { return static_cast<int>(columns.rows()); }
  int cols() const { return static_cast<int>(columns.cols()); }

  void append(const Eigen::VectorXd& v, std::string label);
};

/// Truncation rule: keep the first `order` modes, or every mode with
/// lambda_i / lambda_max > ratio.
struct Truncation {
  enum class Kind { Order, Ratio };
  Kind kind = Kind::Order;
  int order = 0;
  double ratio = 0.0;

  static Truncation by_order(int n) { return {Kind::Order, n, 0.0}; }
  static Truncation by_ratio(double eps) { return {Kind::Ratio, 0, eps}; }
};

/// Orthonormal basis extracted from a snapshot set, together with the full
/// eigenvalue spectrum of the correlation matrix (descending, length n_s).
struct ReducedBasis {
  Eigen::MatrixXd C;        // n_u x n_c, orthonormal columns
  Eigen::VectorXd lambdas;  // all correlation eigenvalues, descending
  int n_c() const { return static_cast<int>(C.cols()); }
};

/// Eigenvalues below rank_cutoff() * lambda_max are treated as numerical
/// zeros and never selected, whatever the truncation asks for.
double rank_cutoff();

/// Basis from the n_s x n_s correlation eigenproblem S^T S V = lambda V,
/// with C_i = lambda_i^{-1/2} S V_i. Throws on an all-zero snapshot.
ReducedBasis compute_pod_basis(const SnapshotMatrix& snapshots, const Truncation& truncation);

/// Normalized truncation error nu_SVD = sqrt(sum of truncated eigenvalues)
/// / sqrt(sum of all eigenvalues).
double svd_truncation_error(const ReducedBasis& basis, const SnapshotMatrix& snapshots);

/// Coordinates C^T v and the norm of the out-of-space remainder.
std::pair<Eigen::VectorXd, double> project(const ReducedBasis& basis, const Eigen::VectorXd& v);

}  // namespace latred
