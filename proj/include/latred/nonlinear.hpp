#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "latred/errors.hpp"
#include "latred/lattice.hpp"
#include "latred/pod.hpp"

namespace latred {

/// Continuation parameters: the load factor of each increment is solved so
/// that the maximum damage increment equals delta_d_max.
struct IncrementControl {
  double delta_d_max = 0.05;
  double newton_tol = 1e-8;
  int newton_max_iters = 40;
  double lambda_min = 0.0;   // load-control bracketing interval
  double lambda_max = 1e9;
  double initial_load_step = 0.1;
  double control_rel_tol = 1e-6;  // |max dd - target| <= tol * target
  int max_trials = 80;
};

struct IncrementRecord {
  int increment = 0;  // 1-based
  double lambda = 0.0;
  double deflection = 0.0;
  double max_damage = 0.0;
  double max_delta_d = 0.0;
  int newton_iters = 0;
  int control_trials = 0;
  long cg_iterations = 0;
  int corrections = 0;
  double residual_rel = 0.0;  // full residual at acceptance, relative
};

struct SolveHistory {
  std::vector<IncrementRecord> records;
  std::vector<Eigen::VectorXd> displacements;  // converged U per increment
  std::vector<DamageState> states;
  SnapshotMatrix snapshots;
};

struct NewtonOutcome {
  Eigen::VectorXd u;  // total displacement at return
  DamageState trial;  // damage evaluated at u, history uncommitted
  int iters = 0;
  bool converged = false;
  double residual_rel = 0.0;
};

/// Tangent Newton at fixed load factor, starting from u_prev with the
/// committed damage history. Consistent tangent on loading branches with an
/// automatic secant retry; `converged == false` encodes non-convergence or a
/// singular tangent.
NewtonOutcome newton_solve_full(const LatticeModel& model, const DamageState& committed,
                                const Eigen::VectorXd& u_prev, double lambda, double tol,
                                int max_iters);

/// Step-size memory of the load controller across increments.
struct ArcMemory {
  double step = 0.0;
  int dir = 1;
};

template <class Outcome>
struct ControlResult {
  double lambda = 0.0;
  Outcome outcome;
  int trials = 0;
};

/// Scalar load-control iteration: finds lambda such that the maximum damage
/// increment produced by `trial` equals the target. Brackets by a secant
/// walk from the previous load level, then runs Illinois false position.
/// `trial(lambda)` returns nullopt when the equilibrium solve fails at that
/// load level (beyond a limit point); failed levels become bisection bounds.
/// When the target sits exactly on a fold the iteration stalls at floating
/// point resolution; the stalled point is accepted as long as it satisfies
/// the coarse control contract |max dd - target| <= 1e-3 * target. Throws
/// ControlFailure when no admissible load level exists inside the bounds.
template <class Outcome, class TrialFn>
ControlResult<Outcome> solve_damage_control(TrialFn&& trial, double lambda_prev,
                                            const IncrementControl& c, ArcMemory& memory) {
  const double target = c.delta_d_max;
  const double gtol = c.control_rel_tol * target;
  const double fold_tol = 1e-3 * target;
  int trials = 0;

  auto clamp = [&](double x) { return std::min(c.lambda_max, std::max(c.lambda_min, x)); };
  auto stall_eps = [&](double scale) { return 1e-11 * std::max(1.0, std::abs(scale)); };

  // Best admissible point seen, for stalled-fold acceptance.
  double best_g = std::numeric_limits<double>::infinity();
  double best_lambda = 0.0;
  std::optional<Outcome> best_outcome;

  auto evaluate = [&](double lambda) -> std::optional<std::pair<double, Outcome>> {
    if (trials >= c.max_trials) throw ControlFailure("load control: trial budget exhausted");
    ++trials;
    auto res = trial(lambda);
    if (res && std::abs(res->first - target) < std::abs(best_g)) {
      best_g = res->first - target;
      best_lambda = lambda;
      best_outcome = res->second;
    }
    return res;
  };
  auto accept = [&](double lambda, Outcome&& out) -> ControlResult<Outcome> {
    memory.step = std::max(std::abs(lambda - lambda_prev), 1e-12);
    memory.dir = lambda >= lambda_prev ? 1 : -1;
    return {lambda, std::move(out), trials};
  };
  auto accept_best_or_fail = [&]() -> ControlResult<Outcome> {
    if (best_outcome && std::abs(best_g) <= fold_tol)
      return accept(best_lambda, std::move(*best_outcome));
    throw ControlFailure("load control: iteration stalled away from the damage target");
  };

  const double h0 = memory.step > 0 ? memory.step : c.initial_load_step;
  int dir = memory.dir >= 0 ? 1 : -1;

  // Foothold at the previous load level. The trial runs from the predictor
  // state, so near a limit point this measures the forward (descending)
  // branch rather than the zero increment.
  auto res0 = evaluate(clamp(lambda_prev));
  if (!res0) throw ControlFailure("load control: equilibrium lost at the previous load level");
  const double g0 = res0->first - target;
  if (std::abs(g0) <= gtol) return accept(clamp(lambda_prev), std::move(res0->second));

  double la = 0.0, ga = 0.0, lb = 0.0, gb = 0.0;  // la: g<0 side, lb: g>0 side
  bool have_neg = false, have_pos = false;
  if (g0 < 0) {
    la = clamp(lambda_prev);
    ga = g0;
    have_neg = true;
  } else {
    lb = clamp(lambda_prev);
    gb = g0;
    have_pos = true;
  }

  // Phase 1: walk away from lambda_prev until both signs of g are seen.
  // Same-sign progress extrapolates by secant steps; a failed solve marks
  // the unreachable side and switches to bisection against it.
  bool flipped = false;
  bool probed_opposite = false;
  double h = h0;
  double anchor = clamp(lambda_prev);
  double g_anchor = g0;
  double prev_l = std::numeric_limits<double>::quiet_NaN(), prev_g = 0.0;
  double fail_bound = std::numeric_limits<double>::quiet_NaN();

  auto flip = [&]() {
    flipped = true;
    dir = -dir;
    h = h0;
    anchor = clamp(lambda_prev);
    g_anchor = g0;
    prev_l = std::numeric_limits<double>::quiet_NaN();
    fail_bound = std::numeric_limits<double>::quiet_NaN();
  };

  while (!(have_neg && have_pos)) {
    double cand;
    if (!std::isnan(fail_bound)) {
      cand = clamp(0.5 * (anchor + fail_bound));
    } else {
      double step = dir * h;
      if (!std::isnan(prev_l) && g_anchor != prev_g) {
        // Secant step toward the root of the walked branch, capped to avoid
        // vaulting onto a different solution branch.
        const double secant = -g_anchor * (anchor - prev_l) / (g_anchor - prev_g);
        if (std::isfinite(secant) && secant * dir > 0.0)
          step = dir * std::min(std::abs(secant), 4.0 * std::abs(anchor - prev_l));
      }
      cand = clamp(anchor + step);
    }
    if (std::abs(cand - anchor) < stall_eps(anchor)) {
      if (best_outcome && std::abs(best_g) <= fold_tol) return accept_best_or_fail();
      if (!flipped) {
        flip();
        continue;
      }
      return accept_best_or_fail();
    }
    auto res = evaluate(cand);
    if (!res) {
      if (!probed_opposite && std::isnan(fail_bound) && !flipped) {
        // First dead end: one probe on the other side of lambda_prev, which
        // settles the walking direction near a load peak.
        probed_opposite = true;
        const double probe = clamp(lambda_prev - dir * h);
        if (std::abs(probe - lambda_prev) > stall_eps(lambda_prev)) {
          auto pres = evaluate(probe);
          if (pres) {
            const double pg = pres->first - target;
            if (std::abs(pg) <= gtol) return accept(probe, std::move(pres->second));
            if ((pg > 0) != (g0 > 0)) {
              if (pg > 0) {
                lb = probe;
                gb = pg;
                have_pos = true;
              } else {
                la = probe;
                ga = pg;
                have_neg = true;
              }
              break;
            }
            if (std::abs(pg) < std::abs(g0)) {
              // The other side makes progress: walk that way instead.
              flip();
              anchor = probe;
              g_anchor = pg;
              if (pg < 0) {
                la = probe;
                ga = pg;
              } else {
                lb = probe;
                gb = pg;
              }
              continue;
            }
          }
        }
      }
      fail_bound = cand;
      continue;
    }
    const double g = res->first - target;
    if (std::abs(g) <= gtol) return accept(cand, std::move(res->second));
    if (g < 0) {
      la = cand;
      ga = g;
      have_neg = true;
    } else {
      lb = cand;
      gb = g;
      have_pos = true;
    }
    if (!(have_neg && have_pos)) {
      prev_l = anchor;
      prev_g = g_anchor;
      anchor = cand;
      g_anchor = g;
      h *= 2.0;
    }
  }

  // Phase 2: Illinois false position on the bracket; a failing midpoint is
  // assigned to the over-damaged side and forces one bisection.
  int last_side = 0;
  bool force_bisect = false;
  while (true) {
    if (std::abs(lb - la) < stall_eps(la)) return accept_best_or_fail();
    double lm;
    if (force_bisect) {
      lm = 0.5 * (la + lb);
    } else {
      lm = (la * gb - lb * ga) / (gb - ga);
      const double lo = std::min(la, lb), hi = std::max(la, lb);
      if (!std::isfinite(lm) || !(lm > lo && lm < hi)) lm = 0.5 * (la + lb);
    }
    force_bisect = false;
    auto res = evaluate(lm);
    if (!res) {
      lb = lm;
      force_bisect = true;
      last_side = 0;
      continue;
    }
    const double g = res->first - target;
    if (std::abs(g) <= gtol) return accept(lm, std::move(res->second));
    if (g > 0) {
      lb = lm;
      gb = g;
      if (last_side == 1) ga *= 0.5;
      last_side = 1;
    } else {
      la = lm;
      ga = g;
      if (last_side == -1) gb *= 0.5;
      last_side = -1;
    }
  }
}

struct FullStep {
  double lambda = 0.0;
  NewtonOutcome outcome;
  int trials = 0;
};

/// Scale s <= 4 for the extrapolated start u_prev + s * du_prev such that
/// the damage increment evaluated along the extrapolation matches
/// `kinematic_target` (a mis-sized predictor strands Newton on the wrong
/// branch near sharp limit points).
double damage_scaled_predictor(const LatticeModel& model, const DamageState& committed,
                               const Eigen::VectorXd& u_prev, const Eigen::VectorXd& du_prev,
                               double kinematic_target);

/// Predictor bias ladder for increments whose damage target sits in the
/// fold of a limit point: the nominal predictor first, then one biased
/// toward the descending branch, then one toward the ascending branch.
inline constexpr double kPredictorBoosts[] = {1.0, 2.0, 0.5};

/// One damage-controlled increment of the full-order problem. Trials start
/// from the extrapolated state u_prev + du_prev (which carries the solve past
/// limit points) and fall back to u_prev when that fails.
FullStep arc_length_step(const LatticeModel& model, const DamageState& committed,
                         const Eigen::VectorXd& u_prev, const Eigen::VectorXd& du_prev,
                         double lambda_prev, const IncrementControl& control, ArcMemory& memory);

/// Full-order reference run. Snapshot columns are the converged incremental
/// solutions (or total displacements when snapshot_total_u is set).
SolveHistory run_reference(const LatticeModel& model, const IncrementControl& control,
                           int n_increments, bool snapshot_total_u = false);

}  // namespace latred
