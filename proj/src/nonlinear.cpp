#include "latred/nonlinear.hpp"

#include <Eigen/SparseLU>

#include "latred/log.hpp"

namespace latred {

namespace {

NewtonOutcome newton_attempt(const LatticeModel& model, const DamageState& committed,
                             const Eigen::VectorXd& u_prev, double lambda, double tol,
                             int max_iters, TangentMode mode) {
  NewtonOutcome out;
  out.u = u_prev;
  const Eigen::VectorXd fext = external_forces(model, lambda);
  const double fext_norm = fext.norm();
  const double scale = fext_norm > 0.0 ? fext_norm : 1.0;

  double initial_res = -1.0;
  for (int it = 0; it <= max_iters; ++it) {
    out.trial = update_damage(committed, model, model.expand(out.u));
    const Eigen::VectorXd r = internal_forces(model, out.u, out.trial) + fext;
    const double rn = r.norm();
    out.residual_rel = rn / scale;
    out.iters = it;
    if (!std::isfinite(rn)) return out;  // diverged
    if (initial_res < 0.0) initial_res = rn;
    if (rn <= tol * scale) {
      out.converged = true;
      return out;
    }
    if (rn > 1e3 * std::max(initial_res, scale)) return out;  // runaway iterate
    if (it == max_iters) return out;

    const Eigen::SparseMatrix<double> k = tangent_stiffness(model, out.u, out.trial, mode);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(k);
    if (lu.info() != Eigen::Success) return out;  // singular tangent
    const Eigen::VectorXd du = lu.solve(r);
    if (lu.info() != Eigen::Success || !du.allFinite()) return out;
    out.u += du;
  }
  return out;
}

}  // namespace

NewtonOutcome newton_solve_full(const LatticeModel& model, const DamageState& committed,
                                const Eigen::VectorXd& u_prev, double lambda, double tol,
                                int max_iters) {
  NewtonOutcome out =
      newton_attempt(model, committed, u_prev, lambda, tol, max_iters, TangentMode::Consistent);
  if (out.converged) return out;
  log_debug("full newton: consistent tangent failed at lambda=%.6g, retrying secant", lambda);
  NewtonOutcome secant =
      newton_attempt(model, committed, u_prev, lambda, tol, 3 * max_iters, TangentMode::Secant);
  return secant.converged ? secant : out;
}

double damage_scaled_predictor(const LatticeModel& model, const DamageState& committed,
                               const Eigen::VectorXd& u_prev, const Eigen::VectorXd& du_prev,
                               double kinematic_target) {
  auto kinematic_dd = [&](double s) {
    const DamageState trial = update_damage(committed, model, model.expand(u_prev + s * du_prev));
    return (trial.d - committed.d).maxCoeff();
  };
  constexpr double kMaxScale = 4.0;
  if (kinematic_dd(kMaxScale) <= kinematic_target * (1.0 + 1e-9)) return kMaxScale;
  double lo = 0.0, hi = kMaxScale;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double dd = kinematic_dd(mid);
    if (std::abs(dd - kinematic_target) <= 1e-3 * kinematic_target) return mid;
    (dd > kinematic_target ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

FullStep arc_length_step(const LatticeModel& model, const DamageState& committed,
                         const Eigen::VectorXd& u_prev, const Eigen::VectorXd& du_prev,
                         double lambda_prev, const IncrementControl& control, ArcMemory& memory) {
  const bool has_predictor = du_prev.size() == u_prev.size() && du_prev.norm() > 0.0;
  for (double boost : kPredictorBoosts) {
    const double scale =
        has_predictor ? damage_scaled_predictor(model, committed, u_prev, du_prev,
                                                boost * control.delta_d_max)
                      : 1.0;
    const Eigen::VectorXd u_start =
        has_predictor ? Eigen::VectorXd(u_prev + scale * du_prev) : u_prev;
    auto trial = [&](double lambda) -> std::optional<std::pair<double, NewtonOutcome>> {
      NewtonOutcome out = newton_solve_full(model, committed, u_start, lambda, control.newton_tol,
                                            control.newton_max_iters);
      if (!out.converged && has_predictor)
        out = newton_solve_full(model, committed, u_prev, lambda, control.newton_tol,
                                control.newton_max_iters);
      if (!out.converged) return std::nullopt;
      const double max_dd = (out.trial.d - committed.d).maxCoeff();
      return std::make_pair(max_dd, std::move(out));
    };
    try {
      ControlResult<NewtonOutcome> res =
          solve_damage_control<NewtonOutcome>(trial, lambda_prev, control, memory);
      return {res.lambda, std::move(res.outcome), res.trials};
    } catch (const ControlFailure&) {
      if (!has_predictor || boost == kPredictorBoosts[2]) throw;
      log_debug("arc step: control stalled with predictor boost %.2g, retrying", boost);
    }
  }
  throw ControlFailure("load control: all predictor biases exhausted");
}

SolveHistory run_reference(const LatticeModel& model, const IncrementControl& control,
                           int n_increments, bool snapshot_total_u) {
  SolveHistory history;
  DamageState state = DamageState::zero(model.num_bars());
  Eigen::VectorXd u = Eigen::VectorXd::Zero(model.num_free_dofs());
  Eigen::VectorXd du_prev = Eigen::VectorXd::Zero(model.num_free_dofs());
  double lambda = 0.0;
  ArcMemory memory;

  for (int inc = 1; inc <= n_increments; ++inc) {
    FullStep step;
    try {
      step = arc_length_step(model, state, u, du_prev, lambda, control, memory);
    } catch (const ControlFailure& e) {
      throw ControlFailure("increment " + std::to_string(inc) + ": " + e.what());
    }

    const Eigen::VectorXd du = step.outcome.u - u;
    du_prev = du;
    u = step.outcome.u;
    lambda = step.lambda;
    const double max_dd = (step.outcome.trial.d - state.d).maxCoeff();
    commit_damage(state, model, model.expand(u));

    IncrementRecord rec;
    rec.increment = inc;
    rec.lambda = lambda;
    rec.deflection = model.load_deflection(u);
    rec.max_damage = state.d.maxCoeff();
    rec.max_delta_d = max_dd;
    rec.newton_iters = step.outcome.iters;
    rec.control_trials = step.trials;
    rec.residual_rel = step.outcome.residual_rel;
    history.records.push_back(rec);
    history.displacements.push_back(u);
    history.states.push_back(state);
    history.snapshots.append(snapshot_total_u ? u : du, "inc" + std::to_string(inc));
    log_info("increment %d: lambda=%.8g deflection=%.8g max_d=%.6g newton=%d trials=%d", inc,
             rec.lambda, rec.deflection, rec.max_damage, rec.newton_iters, rec.control_trials);
  }
  return history;
}

}  // namespace latred
