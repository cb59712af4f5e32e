#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "latred/localglobal.hpp"
#include "latred/nonlinear.hpp"

namespace latred {

/// Gates and tolerances of the on-the-fly basis corrections. A correction is
/// attempted only when the reduced problem has converged below eta_reduced
/// while the full residual still exceeds eta_global.
struct CorrectionPolicy {
  double eta_global = 1e-1;
  double eta_reduced = 1e-3;
  double krylov_tol_correction = 1e-1;
  int max_corrections_per_increment = 8;
  int cg_max_iters = 0;  // 0: dimension based
};

struct CorrectionRecord {
  int increment = 0;
  int newton_iter = 0;
  double pre_full_rel = 0.0;
  double post_full_rel = 0.0;  // full residual at the next evaluation after injection
  double reduced_rel = 0.0;    // reduced residual when the gate fired
  int krylov_iters = 0;
  double kbar_angle = 0.0;  // |C^T Kbar v| / |Kbar v| at injection
};

/// Coarse projected-CG solve of Kbar du = r constrained Kbar-orthogonally to
/// span(C). Returns the unit correction du_K / |du_K| or nullopt when the
/// orthogonal part is negligible (the basis already captures the residual).
std::optional<Eigen::VectorXd> global_correction(const Eigen::SparseMatrix<double>& k_bar,
                                                 const Eigen::VectorXd& r_full,
                                                 const Eigen::MatrixXd& c, double tol,
                                                 int max_iters, int* iters_out = nullptr,
                                                 double* angle_out = nullptr,
                                                 double* raw_norm_out = nullptr);

enum class SplitOverride { Heuristic, ForceEmpty, ForceAll };

/// Configuration of a reduced run (pure POD, local/global, or adaptive).
struct ReducedRunConfig {
  IncrementControl control;
  int n_increments = 0;
  SplitParams split_params;
  SplitOverride split_override = SplitOverride::Heuristic;
  bool enrichment = true;
  LocalGlobalOptions lg;
  bool corrections = false;
  CorrectionPolicy policy;
};

struct ReducedRunResult {
  SolveHistory history;
  std::vector<CorrectionRecord> corrections;
  ReducedBasis final_basis;
  std::vector<Splitting> splittings;                      // one per increment
  std::vector<std::pair<int, LgIterationLog>> iteration_logs;  // (increment, log), accepted trials
};

/// Damage-controlled continuation on the locally reduced problem: per
/// increment, build the splitting from the last converged damage increment,
/// solve with the local/global Newton (with corrections when enabled), then
/// enrich the basis with the converged solution. With corrections disabled
/// this is the plain local/global run; with the splitting forced empty and
/// corrections enabled it degenerates to the global-corrections-only method.
ReducedRunResult adaptive_solve(const LatticeModel& model, const ReducedRunConfig& config,
                                const ReducedBasis& basis0);

}  // namespace latred
