#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "latred/errors.hpp"

namespace latred {

/// Symmetric linear operator, either an explicit dense matrix or a
/// matrix-vector callback with a diagonal hint for preconditioning.
class SymmetricOperator {
 public:
  SymmetricOperator() = default;
  explicit SymmetricOperator(Eigen::MatrixXd dense);
  SymmetricOperator(int dim, std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply,
                    Eigen::VectorXd diag_hint);

  int dim() const { return dim_; }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  const Eigen::VectorXd& diagonal() const { return diag_; }
  bool is_explicit() const { return is_explicit_; }
  const Eigen::MatrixXd& matrix() const { return dense_; }

 private:
  int dim_ = 0;
  bool is_explicit_ = true;
  Eigen::MatrixXd dense_;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply_;
  Eigen::VectorXd diag_;
};

/// Blocks of the reduced tangent A^T K A in the (reduced | fully resolved)
/// ordering. Kfr is the transpose of Krf; Kff stays sparse.
struct ReducedTangentBlocks {
  Eigen::MatrixXd Krr;             // n_c x n_c
  Eigen::MatrixXd Kfr;             // n_f x n_c
  Eigen::SparseMatrix<double> Kff; // n_f x n_f
  int n_c() const { return static_cast<int>(Krr.rows()); }
  int n_f() const { return static_cast<int>(Kff.rows()); }
};

/// Eigen-filtered inverse of a small symmetric matrix. Directions with
/// |lambda| below tol * |lambda|_max are treated as rank deficiency.
class SpectralSolver {
 public:
  SpectralSolver() = default;
  /// Throws SingularReducedBlock when rank deficient; the exception carries
  /// the eigenvectors of the non-degenerate directions.
  static SpectralSolver build_or_throw(const Eigen::MatrixXd& m, double tol,
                                       const char* context);
  /// Drops degenerate directions silently (pseudo-inverse).
  static SpectralSolver build_filtered(const Eigen::MatrixXd& m, double tol);

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
  int rank() const { return static_cast<int>(inv_eigs_.size()); }
  bool empty() const { return vectors_.rows() == 0; }

 private:
  static SpectralSolver build(const Eigen::MatrixXd& m, double tol, bool throw_on_deficiency,
                              const char* context);

  Eigen::MatrixXd vectors_;   // kept eigenvectors
  Eigen::VectorXd inv_eigs_;  // 1 / kept eigenvalues
};

struct CondenseOptions {
  int explicit_schur_max = 2000;  // larger n_f switches to operator products
  double krr_rank_tol = 1e-12;
  // Solve degenerate K^(rr) directions by pseudo-inverse instead of raising
  // SingularReducedBlock. Basis columns supported on the resolved dofs are
  // annihilated by P^(r), so their reduced coordinates drop out routinely.
  bool pseudo_inverse_krr = false;
};

/// Condensed linearized system S_P x_f = R_C on the fully resolved dofs,
/// for the system [Krr Krf; Kfr Kff] [x_r; x_f] = [rhs_r; rhs_f].
struct CondensedSystem {
  SymmetricOperator S_P;
  Eigen::VectorXd R_C;
  SpectralSolver krr;
  Eigen::MatrixXd Kfr;
  int n_c = 0;
  int n_f = 0;
};

/// Builds S_P = Kff - Kfr Krr^-1 Krf and R_C = rhs_f - Kfr Krr^-1 rhs_r.
/// Throws SingularReducedBlock when Krr is rank deficient.
CondensedSystem condense(const ReducedTangentBlocks& blocks, const Eigen::VectorXd& rhs_r,
                         const Eigen::VectorXd& rhs_f, const CondenseOptions& options = {});

/// Recovers the reduced coordinates once the condensed solve is done:
/// x_r = Krr^-1 (rhs_r - Krf x_f).
Eigen::VectorXd back_substitute(const CondensedSystem& sys, const Eigen::VectorXd& rhs_r,
                                const Eigen::VectorXd& x_f);

/// Augmentation space for the condensed solve: the restriction C_f of the
/// reduced basis to the fully resolved dofs, with the coarse operator
/// C_f^T S_P C_f factored through an eigen filter.
class Augmentation {
 public:
  Augmentation() = default;
  static Augmentation build(const SymmetricOperator& s_p, const Eigen::MatrixXd& c_f,
                            double rank_tol = 1e-10);

  bool empty() const { return cf_.cols() == 0; }
  int size() const { return static_cast<int>(cf_.cols()); }

  /// P v = v - C_f (C_f^T S_P C_f)^-1 C_f^T S_P v.
  Eigen::VectorXd project(const Eigen::VectorXd& v) const;
  /// P^T v.
  Eigen::VectorXd project_transpose(const Eigen::VectorXd& v) const;
  /// C_f (C_f^T S_P C_f)^-1 C_f^T y.
  Eigen::VectorXd coarse_apply(const Eigen::VectorXd& y) const;

  const Eigen::MatrixXd& cf() const { return cf_; }
  const Eigen::MatrixXd& s_p_cf() const { return sp_cf_; }

 private:
  Eigen::MatrixXd cf_;     // n_f x m (rank filtered)
  Eigen::MatrixXd sp_cf_;  // S_P * cf
  SpectralSolver coarse_;
};

/// Coarse initialization: best condensed solution inside span(C_f).
Eigen::VectorXd coarse_init(const CondensedSystem& sys, const Augmentation& aug);

/// Jacobi preconditioner from diag(S_P); falls back to the identity with a
/// warning when the diagonal is not strictly positive.
struct Preconditioner {
  Eigen::VectorXd inv_diag;
  bool identity = false;
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    return identity ? v : inv_diag.cwiseProduct(v).eval();
  }
};

Preconditioner diagonal_preconditioner(const CondensedSystem& sys);
Preconditioner diagonal_preconditioner(const SymmetricOperator& op);

struct CgOptions {
  double tol = 1e-8;       // relative preconditioned residual
  int max_iters = 0;       // 0: dim + 10
  bool reorthogonalize = false;
};

struct CgReport {
  int iterations = 0;
  std::vector<double> residual_history;          // |r_j| / |R_C|
  std::vector<double> precond_residual_history;  // sqrt(r M^-1 r) relative
  bool converged = false;
};

/// Augmented preconditioned conjugate gradient: coarse initialization in
/// span(C_f), then CG iterations kept S_P-orthogonal to it by projecting
/// every preconditioned residual. Throws KrylovBreakdown on non-positive
/// curvature; an exhausted iteration budget is reported, not thrown.
std::pair<Eigen::VectorXd, CgReport> augmented_pcg(const SymmetricOperator& s_p,
                                                   const Eigen::VectorXd& rhs,
                                                   const Augmentation& aug,
                                                   const Preconditioner& precond,
                                                   const CgOptions& options);

/// Convenience overload operating on a condensed system.
std::pair<Eigen::VectorXd, CgReport> augmented_pcg(const CondensedSystem& sys,
                                                   const Augmentation& aug,
                                                   const CgOptions& options);

}  // namespace latred
