#include "latred/pod.hpp"

#include <algorithm>
#include <cmath>

namespace latred {

void SnapshotMatrix::append(const Eigen::VectorXd& v, std::string label) {
  if (columns.size() == 0) {
    columns.resize(v.size(), 1);
    columns.col(0) = v;
  } else {
    if (columns.rows() != v.size()) throw Error("snapshot append: dimension mismatch");
    columns.conservativeResize(Eigen::NoChange, columns.cols() + 1);
    columns.col(columns.cols() - 1) = v;
  }
  labels.push_back(std::move(label));
}

double rank_cutoff() { return 1e-12; }

ReducedBasis compute_pod_basis(const SnapshotMatrix& snapshots, const Truncation& truncation) {
  const int n_s = snapshots.cols();
  if (n_s < 1) throw Error("pod: empty snapshot");
  if (truncation.kind == Truncation::Kind::Ratio &&
      (truncation.ratio <= 0.0 || truncation.ratio >= 1.0))
    throw Error("pod: ratio truncation must lie in (0,1)");

  const Eigen::MatrixXd& s = snapshots.columns;
  Eigen::MatrixXd corr = s.transpose() * s;
  corr = 0.5 * (corr + corr.transpose().eval());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
  if (eig.info() != Eigen::Success) throw Error("pod: eigen decomposition failed");

  // Ascending from the solver; flip to descending and clamp noise negatives.
  ReducedBasis basis;
  basis.lambdas.resize(n_s);
  Eigen::MatrixXd vecs(n_s, n_s);
  for (int i = 0; i < n_s; ++i) {
    basis.lambdas[i] = std::max(0.0, eig.eigenvalues()[n_s - 1 - i]);
    vecs.col(i) = eig.eigenvectors().col(n_s - 1 - i);
  }
  const double lambda_max = basis.lambdas[0];
  if (lambda_max <= 0.0) throw Error("pod: snapshot has zero norm");

  int keep = 0;
  const int requested = truncation.kind == Truncation::Kind::Order
                            ? std::min(truncation.order, n_s)
                            : n_s;
  for (int i = 0; i < requested; ++i) {
    if (basis.lambdas[i] <= rank_cutoff() * lambda_max) break;
    if (truncation.kind == Truncation::Kind::Ratio &&
        basis.lambdas[i] / lambda_max <= truncation.ratio)
      break;
    ++keep;
  }
  if (keep == 0) keep = 1;  // lambda_max survives its own cutoff by construction

  basis.C.resize(s.rows(), keep);
  for (int i = 0; i < keep; ++i)
    basis.C.col(i) = s * vecs.col(i) / std::sqrt(basis.lambdas[i]);

  // The correlation route can leave O(sqrt(lambda_max/lambda_i) * eps)
  // orthogonality defects; one Gram-Schmidt pass removes them.
  double defect = 0.0;
  const Eigen::MatrixXd gram = basis.C.transpose() * basis.C;
  defect = (gram - Eigen::MatrixXd::Identity(keep, keep)).cwiseAbs().maxCoeff();
  if (defect > 1e-13) {
    for (int i = 0; i < keep; ++i) {
      for (int j = 0; j < i; ++j)
        basis.C.col(i) -= basis.C.col(j).dot(basis.C.col(i)) * basis.C.col(j);
      basis.C.col(i).normalize();
    }
  }
  return basis;
}

double svd_truncation_error(const ReducedBasis& basis, const SnapshotMatrix& snapshots) {
  (void)snapshots;
  const double total = basis.lambdas.sum();
  if (total <= 0.0) return 0.0;
  double truncated = 0.0;
  for (int i = basis.n_c(); i < basis.lambdas.size(); ++i) truncated += basis.lambdas[i];
  truncated = std::max(0.0, truncated);
  return std::sqrt(truncated) / std::sqrt(total);
}

std::pair<Eigen::VectorXd, double> project(const ReducedBasis& basis, const Eigen::VectorXd& v) {
  if (v.size() != basis.C.rows()) throw Error("project: dimension mismatch");
  Eigen::VectorXd coords = basis.C.transpose() * v;
  const double residual = (v - basis.C * coords).norm();
  return {std::move(coords), residual};
}

}  // namespace latred
