#include "latred/krylov.hpp"

#include <cmath>

#include "latred/log.hpp"

namespace latred {

SymmetricOperator::SymmetricOperator(Eigen::MatrixXd dense)
    : dim_(static_cast<int>(dense.rows())), is_explicit_(true), dense_(std::move(dense)) {
  diag_ = dense_.diagonal();
}

SymmetricOperator::SymmetricOperator(int dim,
                                     std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply,
                                     Eigen::VectorXd diag_hint)
    : dim_(dim), is_explicit_(false), apply_(std::move(apply)), diag_(std::move(diag_hint)) {}

Eigen::VectorXd SymmetricOperator::apply(const Eigen::VectorXd& v) const {
  return is_explicit_ ? Eigen::VectorXd(dense_ * v) : apply_(v);
}

// ---------------------------------------------------------------------------
// Spectral solver
// ---------------------------------------------------------------------------

SpectralSolver SpectralSolver::build(const Eigen::MatrixXd& m, double tol,
                                     bool throw_on_deficiency, const char* context) {
  const int n = static_cast<int>(m.rows());
  if (n == 0) return SpectralSolver{};
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw Error("spectral solver: decomposition failed");
  const Eigen::VectorXd abs_eigs = eig.eigenvalues().cwiseAbs();
  const double max_abs = abs_eigs.maxCoeff();
  std::vector<int> keep;
  for (int i = 0; i < n; ++i)
    if (max_abs > 0.0 && abs_eigs[i] > tol * max_abs) keep.push_back(i);
  if (throw_on_deficiency && static_cast<int>(keep.size()) < n) {
    Eigen::MatrixXd kept(n, keep.size());
    for (size_t j = 0; j < keep.size(); ++j) kept.col(j) = eig.eigenvectors().col(keep[j]);
    throw SingularReducedBlock(std::string(context) + ": rank deficient block", std::move(kept));
  }
  SpectralSolver out;
  out.vectors_.resize(n, keep.size());
  out.inv_eigs_.resize(keep.size());
  for (size_t j = 0; j < keep.size(); ++j) {
    out.vectors_.col(j) = eig.eigenvectors().col(keep[j]);
    out.inv_eigs_[j] = 1.0 / eig.eigenvalues()[keep[j]];
  }
  return out;
}

SpectralSolver SpectralSolver::build_or_throw(const Eigen::MatrixXd& m, double tol,
                                              const char* context) {
  return build(m, tol, true, context);
}

SpectralSolver SpectralSolver::build_filtered(const Eigen::MatrixXd& m, double tol) {
  return build(m, tol, false, "");
}

Eigen::VectorXd SpectralSolver::solve(const Eigen::VectorXd& rhs) const {
  if (vectors_.cols() == 0) return Eigen::VectorXd::Zero(rhs.size());
  return vectors_ * inv_eigs_.cwiseProduct(vectors_.transpose() * rhs);
}

Eigen::MatrixXd SpectralSolver::solve(const Eigen::MatrixXd& rhs) const {
  if (vectors_.cols() == 0) return Eigen::MatrixXd::Zero(rhs.rows(), rhs.cols());
  return vectors_ * inv_eigs_.asDiagonal() * (vectors_.transpose() * rhs);
}

// ---------------------------------------------------------------------------
// Condensation
// ---------------------------------------------------------------------------

CondensedSystem condense(const ReducedTangentBlocks& blocks, const Eigen::VectorXd& rhs_r,
                         const Eigen::VectorXd& rhs_f, const CondenseOptions& options) {
  if (rhs_r.size() != blocks.n_c() || rhs_f.size() != blocks.n_f())
    throw Error("condense: rhs dimensions do not match the blocks");

  CondensedSystem sys;
  sys.n_c = blocks.n_c();
  sys.n_f = blocks.n_f();
  sys.Kfr = blocks.Kfr;
  // An exactly-zero K^(rr) is the structural degeneracy of a fully resolved
  // splitting (the basis columns are annihilated by P^(r)): the reduced
  // coordinates drop out instead of flagging a rank failure.
  const bool krr_vanishes =
      blocks.Krr.size() == 0 || blocks.Krr.cwiseAbs().maxCoeff() == 0.0;
  sys.krr = krr_vanishes || options.pseudo_inverse_krr
                ? SpectralSolver::build_filtered(blocks.Krr, options.krr_rank_tol)
                : SpectralSolver::build_or_throw(blocks.Krr, options.krr_rank_tol, "condense");

  if (sys.n_c == 0) {
    sys.R_C = rhs_f;
  } else {
    sys.R_C = rhs_f - blocks.Kfr * sys.krr.solve(rhs_r);
  }

  if (sys.n_f <= options.explicit_schur_max) {
    Eigen::MatrixXd s_p = Eigen::MatrixXd(blocks.Kff);
    if (sys.n_c > 0) s_p -= blocks.Kfr * sys.krr.solve(Eigen::MatrixXd(blocks.Kfr.transpose()));
    s_p = 0.5 * (s_p + s_p.transpose().eval());
    sys.S_P = SymmetricOperator(std::move(s_p));
  } else {
    const Eigen::SparseMatrix<double> kff = blocks.Kff;
    const Eigen::MatrixXd kfr = blocks.Kfr;
    const SpectralSolver krr = sys.krr;
    const bool coupled = sys.n_c > 0;
    auto apply = [kff, kfr, krr, coupled](const Eigen::VectorXd& v) -> Eigen::VectorXd {
      Eigen::VectorXd out = kff * v;
      if (coupled) out -= kfr * krr.solve(Eigen::VectorXd(kfr.transpose() * v));
      return out;
    };
    sys.S_P = SymmetricOperator(sys.n_f, apply, Eigen::VectorXd(kff.diagonal()));
  }
  return sys;
}

Eigen::VectorXd back_substitute(const CondensedSystem& sys, const Eigen::VectorXd& rhs_r,
                                const Eigen::VectorXd& x_f) {
  if (sys.n_c == 0) return Eigen::VectorXd(0);
  return sys.krr.solve(Eigen::VectorXd(rhs_r - sys.Kfr.transpose() * x_f));
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

Augmentation Augmentation::build(const SymmetricOperator& s_p, const Eigen::MatrixXd& c_f,
                                 double rank_tol) {
  Augmentation aug;
  if (c_f.cols() == 0 || c_f.rows() == 0) return aug;

  Eigen::MatrixXd sp_cf(c_f.rows(), c_f.cols());
  for (int j = 0; j < c_f.cols(); ++j) sp_cf.col(j) = s_p.apply(c_f.col(j));
  Eigen::MatrixXd gram = c_f.transpose() * sp_cf;
  gram = 0.5 * (gram + gram.transpose().eval());

  // Restriction to the master dofs can collapse independent basis vectors;
  // drop the degenerate directions of the Gram operator before inverting.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd abs_eigs = eig.eigenvalues().cwiseAbs();
  const double max_abs = abs_eigs.maxCoeff();
  std::vector<int> keep;
  for (int i = 0; i < gram.rows(); ++i)
    if (max_abs > 0.0 && abs_eigs[i] > rank_tol * max_abs) keep.push_back(i);
  if (keep.empty()) return aug;

  Eigen::MatrixXd directions(gram.rows(), keep.size());
  for (size_t j = 0; j < keep.size(); ++j) directions.col(j) = eig.eigenvectors().col(keep[j]);

  aug.cf_ = c_f * directions;
  aug.sp_cf_ = sp_cf * directions;
  Eigen::MatrixXd coarse = aug.cf_.transpose() * aug.sp_cf_;
  coarse = 0.5 * (coarse + coarse.transpose().eval());
  aug.coarse_ = SpectralSolver::build_filtered(coarse, 1e-14);
  return aug;
}

Eigen::VectorXd Augmentation::project(const Eigen::VectorXd& v) const {
  if (empty()) return v;
  return v - cf_ * coarse_.solve(Eigen::VectorXd(sp_cf_.transpose() * v));
}

Eigen::VectorXd Augmentation::project_transpose(const Eigen::VectorXd& v) const {
  if (empty()) return v;
  return v - sp_cf_ * coarse_.solve(Eigen::VectorXd(cf_.transpose() * v));
}

Eigen::VectorXd Augmentation::coarse_apply(const Eigen::VectorXd& y) const {
  if (empty()) return Eigen::VectorXd::Zero(y.size());
  return cf_ * coarse_.solve(Eigen::VectorXd(cf_.transpose() * y));
}

Eigen::VectorXd coarse_init(const CondensedSystem& sys, const Augmentation& aug) {
  if (aug.empty()) return Eigen::VectorXd::Zero(sys.n_f);
  return aug.coarse_apply(sys.R_C);
}

Preconditioner diagonal_preconditioner(const SymmetricOperator& op) {
  Preconditioner p;
  const Eigen::VectorXd& diag = op.diagonal();
  if (diag.size() == 0) {
    p.identity = true;
    return p;
  }
  if (diag.minCoeff() <= 0.0) {
    log_warn("diagonal preconditioner: non-positive diagonal entry, using identity");
    p.identity = true;
    return p;
  }
  p.inv_diag = diag.cwiseInverse();
  return p;
}

Preconditioner diagonal_preconditioner(const CondensedSystem& sys) {
  return diagonal_preconditioner(sys.S_P);
}

// ---------------------------------------------------------------------------
// Augmented preconditioned conjugate gradient
// ---------------------------------------------------------------------------

std::pair<Eigen::VectorXd, CgReport> augmented_pcg(const SymmetricOperator& s_p,
                                                   const Eigen::VectorXd& rhs,
                                                   const Augmentation& aug,
                                                   const Preconditioner& precond,
                                                   const CgOptions& options) {
  const int n = s_p.dim();
  CgReport report;
  if (n == 0) {
    report.converged = true;
    return {Eigen::VectorXd(0), report};
  }

  const Eigen::VectorXd x_coarse = aug.empty() ? Eigen::VectorXd::Zero(n) : aug.coarse_apply(rhs);
  Eigen::VectorXd r = rhs - s_p.apply(x_coarse);

  const double denom = rhs.norm();
  auto precond_norm = [&](const Eigen::VectorXd& v) { return std::sqrt(v.dot(precond.apply(v))); };
  const double pdenom = precond_norm(rhs);

  if (denom == 0.0) {
    report.converged = true;
    report.residual_history.push_back(0.0);
    report.precond_residual_history.push_back(0.0);
    return {x_coarse, report};
  }

  report.residual_history.push_back(r.norm() / denom);
  report.precond_residual_history.push_back(precond_norm(r) / pdenom);
  if (report.precond_residual_history.back() <= options.tol) {
    report.converged = true;
    return {x_coarse, report};
  }

  const int max_iters = options.max_iters > 0 ? options.max_iters : n + 10;
  Eigen::VectorXd z = aug.project(precond.apply(r));
  Eigen::VectorXd w = z;
  Eigen::VectorXd x_k = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::VectorXd> dirs, s_dirs;  // only filled when reorthogonalizing
  std::vector<double> curvs;

  for (int j = 1; j <= max_iters; ++j) {
    const Eigen::VectorXd sw = s_p.apply(w);
    const double curvature = w.dot(sw);
    if (curvature <= 0.0) {
      if (w.norm() <= 1e-300) break;  // exhausted search space
      throw KrylovBreakdown("augmented pcg: non-positive curvature, operator is not SPD");
    }
    const double alpha = r.dot(w) / curvature;
    x_k += alpha * w;
    r -= alpha * sw;
    report.iterations = j;
    report.residual_history.push_back(r.norm() / denom);
    report.precond_residual_history.push_back(precond_norm(r) / pdenom);
    if (report.precond_residual_history.back() <= options.tol) {
      report.converged = true;
      break;
    }
    z = aug.project(precond.apply(r));
    const double beta = sw.dot(z) / curvature;
    Eigen::VectorXd w_next = z - beta * w;
    if (options.reorthogonalize) {
      dirs.push_back(w);
      s_dirs.push_back(sw);
      curvs.push_back(curvature);
      for (size_t i = 0; i < dirs.size(); ++i)
        w_next -= (s_dirs[i].dot(w_next) / curvs[i]) * dirs[i];
    }
    w = std::move(w_next);
  }
  return {x_coarse + x_k, report};
}

std::pair<Eigen::VectorXd, CgReport> augmented_pcg(const CondensedSystem& sys,
                                                   const Augmentation& aug,
                                                   const CgOptions& options) {
  return augmented_pcg(sys.S_P, sys.R_C, aug, diagonal_preconditioner(sys), options);
}

}  // namespace latred
