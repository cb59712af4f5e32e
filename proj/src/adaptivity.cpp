#include "latred/adaptivity.hpp"

#include <cmath>

#include "latred/log.hpp"

namespace latred {

std::optional<Eigen::VectorXd> global_correction(const Eigen::SparseMatrix<double>& k_bar,
                                                 const Eigen::VectorXd& r_full,
                                                 const Eigen::MatrixXd& c, double tol,
                                                 int max_iters, int* iters_out,
                                                 double* angle_out, double* raw_norm_out) {
  const int n = static_cast<int>(k_bar.rows());
  const SymmetricOperator op(
      n, [&k_bar](const Eigen::VectorXd& v) -> Eigen::VectorXd { return k_bar * v; },
      Eigen::VectorXd(k_bar.diagonal()));

  const Augmentation aug = Augmentation::build(op, c);
  const Preconditioner precond = diagonal_preconditioner(op);
  CgOptions cg;
  cg.tol = tol;
  cg.max_iters = max_iters;
  auto [du, report] = augmented_pcg(op, r_full, aug, precond, cg);
  if (iters_out != nullptr) *iters_out = report.iterations;

  const Eigen::VectorXd du_coarse = aug.empty() ? Eigen::VectorXd::Zero(n) : aug.coarse_apply(r_full);
  const Eigen::VectorXd du_k = du - du_coarse;
  const double raw_norm = du_k.norm();
  if (raw_norm_out != nullptr) *raw_norm_out = raw_norm;
  if (raw_norm < 1e-12 * du.norm() || raw_norm == 0.0) return std::nullopt;

  Eigen::VectorXd unit = du_k / raw_norm;
  if (angle_out != nullptr) {
    const Eigen::VectorXd kv = k_bar * unit;
    const double kn = kv.norm();
    *angle_out = kn > 0.0 && c.cols() > 0 ? (c.transpose() * kv).norm() / kn : 0.0;
  }
  return unit;
}

namespace {

/// Snapshot store carrying exactly the spectral content of the basis, so an
/// enrichment re-sort cannot resurrect directions dropped by the initial
/// truncation.
SnapshotMatrix seed_store(const ReducedBasis& basis) {
  SnapshotMatrix store;
  for (int i = 0; i < basis.n_c(); ++i)
    store.append(basis.C.col(i) * std::sqrt(basis.lambdas[i]), "seed" + std::to_string(i));
  return store;
}

}  // namespace

ReducedRunResult adaptive_solve(const LatticeModel& model, const ReducedRunConfig& config,
                                const ReducedBasis& basis0) {
  ReducedRunResult result;
  ReducedBasis basis = basis0;
  SnapshotMatrix store = seed_store(basis0);

  DamageState state = DamageState::zero(model.num_bars());
  Eigen::VectorXd u = Eigen::VectorXd::Zero(model.num_free_dofs());
  Eigen::VectorXd du_prev = Eigen::VectorXd::Zero(model.num_free_dofs());
  Eigen::VectorXd d_last = Eigen::VectorXd::Zero(model.num_bars());
  Eigen::VectorXd d_before_last = Eigen::VectorXd::Zero(model.num_bars());
  double lambda = 0.0;
  ArcMemory memory;

  int corrections_in_increment = 0;
  bool corrections_exhausted = false;
  int pending_record = -1;  // CorrectionRecord awaiting its post-residual
  int current_increment = 0;

  CorrectionHook hook = [&](InnerIterationContext& ctx) -> bool {
    if (pending_record >= 0) {
      result.corrections[pending_record].post_full_rel = ctx.full_rel;
      pending_record = -1;
    }
    if (corrections_exhausted ||
        corrections_in_increment >= config.policy.max_corrections_per_increment)
      return false;
    if (!(ctx.reduced_rel < config.policy.eta_reduced && ctx.full_rel > config.policy.eta_global))
      return false;

    const Eigen::SparseMatrix<double> k_bar =
        tangent_stiffness(ctx.model, ctx.u, ctx.trial, TangentMode::Secant);
    int iters = 0;
    double angle = 0.0, raw_norm = 0.0;
    const int max_iters =
        config.policy.cg_max_iters > 0 ? config.policy.cg_max_iters : ctx.u.size() + 10;
    auto v = global_correction(k_bar, ctx.r_full, ctx.basis_c, config.policy.krylov_tol_correction,
                               max_iters, &iters, &angle, &raw_norm);
    if (!v) {
      corrections_exhausted = true;
      return false;
    }

    // Orthonormalized column for the basis; the raw-scale component joins the
    // snapshot store so the increment-end re-sort weighs it spectrally.
    Eigen::VectorXd w = *v;
    if (ctx.basis_c.cols() > 0) w -= ctx.basis_c * (ctx.basis_c.transpose() * (*v));
    const double wn = w.norm();
    if (wn < 1e-10) {
      corrections_exhausted = true;
      return false;
    }
    w /= wn;
    ctx.basis_c.conservativeResize(Eigen::NoChange, ctx.basis_c.cols() + 1);
    ctx.basis_c.col(ctx.basis_c.cols() - 1) = w;
    store.append(raw_norm * w, "corr");

    CorrectionRecord rec;
    rec.increment = current_increment;
    rec.newton_iter = ctx.newton_iter;
    rec.pre_full_rel = ctx.full_rel;
    rec.post_full_rel = ctx.full_rel;  // patched at the next evaluation
    rec.reduced_rel = ctx.reduced_rel;
    rec.krylov_iters = iters;
    rec.kbar_angle = angle;
    result.corrections.push_back(rec);
    pending_record = static_cast<int>(result.corrections.size()) - 1;
    ++corrections_in_increment;
    log_debug("correction at increment %d iter %d: pre=%.3g angle=%.3g cg=%d", current_increment,
              ctx.newton_iter, rec.pre_full_rel, angle, iters);
    return true;
  };
  const CorrectionHook* hook_ptr = config.corrections ? &hook : nullptr;

  for (int inc = 1; inc <= config.n_increments; ++inc) {
    current_increment = inc;
    corrections_in_increment = 0;
    corrections_exhausted = false;

    Splitting split;
    switch (config.split_override) {
      case SplitOverride::ForceEmpty:
        split = Splitting::none(model.num_free_dofs(), inc);
        break;
      case SplitOverride::ForceAll:
        split = Splitting::all(model.num_free_dofs(), inc);
        break;
      case SplitOverride::Heuristic:
        split = select_fully_resolved(model, d_before_last, d_last, config.split_params, inc);
        break;
    }

    const bool has_predictor = du_prev.norm() > 0.0;
    ControlResult<LgResult> step;
    bool stepped = false;
    for (double boost : kPredictorBoosts) {
      const double pred_scale =
          has_predictor ? damage_scaled_predictor(model, state, u, du_prev,
                                                  boost * config.control.delta_d_max)
                        : 1.0;
      auto trial = [&](double lam) -> std::optional<std::pair<double, LgResult>> {
        LgResult out;
        if (has_predictor) {
          const Eigen::VectorXd du0 = pred_scale * du_prev;
          out = newton_solve_localglobal(model, state, u, basis, split, lam, config.lg, hook_ptr,
                                         &du0);
          if (!out.converged)
            out =
                newton_solve_localglobal(model, state, u, basis, split, lam, config.lg, hook_ptr);
        } else {
          out = newton_solve_localglobal(model, state, u, basis, split, lam, config.lg, hook_ptr);
        }
        if (!out.converged) {
          log_debug("inc %d trial lam=%.10g: failed (red=%.2e after %d iters)", inc, lam,
                    out.reduced_rel, out.iters);
          return std::nullopt;
        }
        const double max_dd = (out.trial.d - state.d).maxCoeff();
        log_debug("inc %d trial lam=%.10g: dd=%.6g corrections=%d", inc, lam, max_dd,
                  out.corrections);
        return std::make_pair(max_dd, std::move(out));
      };
      try {
        step = solve_damage_control<LgResult>(trial, lambda, config.control, memory);
        stepped = true;
        break;
      } catch (const ControlFailure& e) {
        if (!has_predictor || boost == kPredictorBoosts[2])
          throw ControlFailure("increment " + std::to_string(inc) + ": " + e.what());
        log_debug("increment %d: control stalled with predictor boost %.2g, retrying", inc,
                  boost);
      }
    }
    if (!stepped)
      throw ControlFailure("increment " + std::to_string(inc) + ": load control failed");

    const Eigen::VectorXd du = step.outcome.u - u;
    du_prev = du;
    u = step.outcome.u;
    lambda = step.lambda;
    const double max_dd = (step.outcome.trial.d - state.d).maxCoeff();
    commit_damage(state, model, model.expand(u));
    d_before_last = d_last;
    d_last = state.d;

    IncrementRecord rec;
    rec.increment = inc;
    rec.lambda = lambda;
    rec.deflection = model.load_deflection(u);
    rec.max_damage = state.d.maxCoeff();
    rec.max_delta_d = max_dd;
    rec.newton_iters = step.outcome.iters;
    rec.control_trials = step.trials;
    rec.corrections = corrections_in_increment;
    rec.residual_rel = step.outcome.full_rel;
    for (const auto& log : step.outcome.logs) rec.cg_iterations += log.cg.iterations;
    result.history.records.push_back(rec);
    result.history.displacements.push_back(u);
    result.history.states.push_back(state);
    result.history.snapshots.append(du, "inc" + std::to_string(inc));
    for (const auto& log : step.outcome.logs) result.iteration_logs.emplace_back(inc, log);
    result.splittings.push_back(split);

    if (config.enrichment) basis = enrich_basis(store, basis, {du});

    log_info("increment %d [reduced]: lambda=%.8g n_f=%d n_c=%d corrections=%d", inc, lambda,
             split.n_f(), basis.n_c(), corrections_in_increment);
  }

  // A pending record at the end of the run keeps its injection-time residual.
  result.final_basis = basis;
  return result;
}

}  // namespace latred
