#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "latred/krylov.hpp"
#include "latred/lattice.hpp"
#include "latred/pod.hpp"

namespace latred {

/// Splitting heuristic parameters: sphere radius around the worst-damaged
/// element, relative damage cutoff and fully-resolved budget.
struct SplitParams {
  double rho_s = 2.5;
  double k_dam = 0.5;
  double k_locglo = 0.1;
};

/// Partition of the free dofs into a fully resolved (master) set and the
/// complementary reduced (slave) set. Fixed for the duration of an increment.
struct Splitting {
  std::vector<int> fully_resolved;  // sorted free-dof ids
  std::vector<int> pos_in_f;        // size n_u, -1 on reduced dofs
  int n_u = 0;
  int epoch = 0;

  int n_f() const { return static_cast<int>(fully_resolved.size()); }
  int n_r() const { return n_u - n_f(); }
  bool is_fully_resolved(int dof) const { return pos_in_f[dof] >= 0; }

  static Splitting from_dofs(std::vector<int> dofs, int n_u, int epoch = 0);
  static Splitting none(int n_u, int epoch = 0) { return from_dofs({}, n_u, epoch); }
  static Splitting all(int n_u, int epoch = 0);
};

/// Greedy sphere covering of the elements with the largest damage increment:
/// repeatedly seed a sphere of radius rho_s at the isobarycenter of the worst
/// remaining element and resolve every dof of the nodes inside. Stops when
/// the remaining maximum increment falls below k_dam times the global one or
/// the resolved set exceeds k_locglo * n_u (the budget may be overshot only
/// by the final sphere). Zero damage increment yields an empty set.
Splitting select_fully_resolved(const LatticeModel& model, const Eigen::VectorXd& d_prev,
                                const Eigen::VectorXd& d_curr, const SplitParams& params,
                                int epoch = 0);

/// Coupling operator A = (P^(r) C | E^(f)^T) mapping the state
/// (alpha, dU_f) to a full free-dof increment. Index maps plus the basis;
/// never materialized as a dense matrix.
class CouplingOperator {
 public:
  CouplingOperator(const Eigen::MatrixXd& c, const Splitting& split);

  int n_c() const { return static_cast<int>(c_->cols()); }
  int n_f() const { return split_->n_f(); }
  int n_u() const { return split_->n_u; }

  /// A [alpha; dU_f]: basis combination on the reduced dofs, verbatim values
  /// on the fully resolved ones.
  Eigen::VectorXd expand(const Eigen::VectorXd& alpha, const Eigen::VectorXd& du_f) const;
  Eigen::VectorXd expand(const Eigen::VectorXd& x) const;

  /// A^T v, stacked (C^T P^(r) v over the rows of v at the master dofs).
  Eigen::VectorXd restrict_to(const Eigen::VectorXd& v) const;

  /// P^(r) C: the basis with the fully resolved rows zeroed.
  Eigen::MatrixXd masked_basis() const;
  /// E^(f) C: the basis rows at the fully resolved dofs.
  Eigen::MatrixXd basis_on_resolved() const;

  const Splitting& splitting() const { return *split_; }
  const Eigen::MatrixXd& basis() const { return *c_; }

 private:
  const Eigen::MatrixXd* c_;
  const Splitting* split_;
};

/// Blocks of A^T K_T A; K^(ff) is the sparse submatrix of the tangent.
ReducedTangentBlocks reduced_tangent(const CouplingOperator& a,
                                     const Eigen::SparseMatrix<double>& k_t);

/// Appends solution vectors to the snapshot store (as their components
/// orthogonal to the current basis) and recomputes the basis by the
/// correlation eigenproblem, keeping every mode above the rank cutoff.
ReducedBasis enrich_basis(SnapshotMatrix& store, const ReducedBasis& current,
                          const std::vector<Eigen::VectorXd>& solutions);

struct LocalGlobalOptions {
  double tol = 1e-8;
  int max_iters = 30;
  CgOptions cg;
  CondenseOptions condense;
  bool shadow_unaugmented = false;  // also run the plain PCG for comparison
};

struct LgIterationLog {
  int newton_iter = 0;
  double reduced_rel = 0.0;
  double full_rel = 0.0;
  CgReport cg;
  int shadow_iterations = -1;    // -1: not measured
  bool shadow_breakdown = false; // plain CG hit non-positive curvature
  bool secant_fallback = false;
  bool dense_fallback = false;
};

struct LgResult {
  Eigen::VectorXd alpha;
  Eigen::VectorXd du_f;
  Eigen::VectorXd u;  // total displacement at return
  DamageState trial;
  bool converged = false;
  int iters = 0;
  double reduced_rel = 0.0;
  double full_rel = 0.0;
  std::vector<LgIterationLog> logs;
  int corrections = 0;
};

/// Context handed to the correction hook at every Newton iteration, before
/// the convergence test. The hook may append orthonormal columns to basis_c;
/// it returns true when it did.
struct InnerIterationContext {
  const LatticeModel& model;
  const Eigen::VectorXd& u;
  const DamageState& trial;
  const Eigen::VectorXd& r_full;
  double reduced_rel = 0.0;
  double full_rel = 0.0;
  int newton_iter = 0;
  Eigen::MatrixXd& basis_c;
};
using CorrectionHook = std::function<bool(InnerIterationContext&)>;

/// Newton iterations on the locally reduced balance equations. Each
/// linearized system goes through condensation on the master dofs, coarse
/// initialization in the restricted basis, augmented PCG and back
/// substitution. Falls back to the secant tangent when the condensed
/// operator loses positive definiteness, then to a dense direct solve.
/// Basis columns annihilated by P^(r) carry no reduced coordinate for this
/// splitting (they remain part of the augmentation space).
/// `du0` optionally seeds the state with a full free-dof increment.
LgResult newton_solve_localglobal(const LatticeModel& model, const DamageState& committed,
                                  const Eigen::VectorXd& u_n, ReducedBasis& basis,
                                  const Splitting& split, double lambda,
                                  const LocalGlobalOptions& options,
                                  const CorrectionHook* hook = nullptr,
                                  const Eigen::VectorXd* du0 = nullptr);

}  // namespace latred
