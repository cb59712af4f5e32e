#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "latred/nonlinear.hpp"
#include "test_helpers.hpp"

using namespace latred;
using namespace latred::testing;

TEST_CASE("newton_solve_full") {
  SUBCASE("zero load from the undeformed state converges immediately") {
    const LatticeModel m = small_tower(1, 1, 2);
    const DamageState state = DamageState::zero(m.num_bars());
    const NewtonOutcome out = newton_solve_full(
        m, state, Eigen::VectorXd::Zero(m.num_free_dofs()), 0.0, 1e-10, 20);
    CHECK(out.converged);
    CHECK(out.iters == 0);
    CHECK(out.u.norm() == 0.0);
  }
  SUBCASE("single bar finds the ascending root of (1-eps)eps = lambda") {
    const LatticeModel m = single_bar();
    const DamageState state = DamageState::zero(1);
    const NewtonOutcome out =
        newton_solve_full(m, state, Eigen::VectorXd::Zero(1), 0.1875, 1e-12, 30);
    REQUIRE(out.converged);
    CHECK(out.u[0] == doctest::Approx(0.25).epsilon(1e-10));
    CHECK(out.trial.d[0] == doctest::Approx(0.25).epsilon(1e-10));
  }
  SUBCASE("a linear elastic lattice converges in one iteration") {
    const LatticeModel m = small_tower(1, 1, 2, MaterialLaw{0.0, 0.5});
    const DamageState state = DamageState::zero(m.num_bars());
    const NewtonOutcome out = newton_solve_full(
        m, state, Eigen::VectorXd::Zero(m.num_free_dofs()), 0.5, 1e-10, 20);
    REQUIRE(out.converged);
    CHECK(out.iters == 1);
  }
  SUBCASE("equilibrium residual meets the tolerance") {
    const LatticeModel m = small_tower(1, 1, 2);
    const DamageState state = DamageState::zero(m.num_bars());
    const double lambda = 0.3;
    const NewtonOutcome out = newton_solve_full(
        m, state, Eigen::VectorXd::Zero(m.num_free_dofs()), lambda, 1e-10, 30);
    REQUIRE(out.converged);
    const Eigen::VectorXd r =
        internal_forces(m, out.u, out.trial) + external_forces(m, lambda);
    CHECK(r.norm() <= 1e-10 * lambda);
  }
}

TEST_CASE("arc-length on the single bar walks the snap-through curve") {
  const LatticeModel m = single_bar();
  IncrementControl control;
  control.delta_d_max = 0.1;
  control.newton_tol = 1e-12;
  control.control_rel_tol = 1e-9;

  DamageState state = DamageState::zero(1);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(1);
  Eigen::VectorXd du_prev = Eigen::VectorXd::Zero(1);
  double lambda = 0.0;
  ArcMemory memory;

  double peak = 0.0;
  for (int k = 1; k <= 9; ++k) {
    const FullStep step = arc_length_step(m, state, u, du_prev, lambda, control, memory);
    du_prev = step.outcome.u - u;
    u = step.outcome.u;
    lambda = step.lambda;
    peak = std::max(peak, lambda);
    const double eps = u[0];
    // Equilibrium pins the point to the closed-form curve; the damage target
    // pins eps to the 0.1 grid (to the control contract; increment 5 sits on
    // the fold, where the resolution of eps is square-root limited).
    CHECK(std::abs(lambda - (1.0 - eps) * eps) <= 1e-8);
    CHECK(std::abs(eps - 0.1 * k) <= 1e-3);
    const double dd = (step.outcome.trial.d - state.d).maxCoeff();
    CHECK(std::abs(dd - 0.1) <= 1e-3 * 0.1);  // control tolerance contract
    commit_damage(state, m, m.expand(u));
  }
  CHECK(peak == doctest::Approx(0.25).epsilon(1e-8));
  // The final increment exhausts the bar: the load collapses to zero.
  const FullStep last = arc_length_step(m, state, u, du_prev, lambda, control, memory);
  CHECK(last.lambda <= 1e-6);
  CHECK(last.outcome.trial.d[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("run_reference reproduces the closed form including the descending branch") {
  const LatticeModel m = single_bar();
  IncrementControl control;
  control.delta_d_max = 0.09;
  control.newton_tol = 1e-12;
  control.control_rel_tol = 1e-9;

  const SolveHistory history = run_reference(m, control, 10);
  REQUIRE(history.records.size() == 10);
  double peak = 0.0;
  for (const auto& rec : history.records) {
    const double eps = rec.deflection;
    CHECK(rec.lambda == doctest::Approx((1.0 - eps) * eps).epsilon(1e-8));
    CHECK(eps == doctest::Approx(0.09 * rec.increment).epsilon(1e-8));
    peak = std::max(peak, rec.lambda);
  }
  // Past the limit point the load factor decreases while deflection grows.
  CHECK(history.records.back().lambda < peak);
  CHECK(peak < 0.25 + 1e-8);

  SUBCASE("snapshots store the converged increments") {
    CHECK(history.snapshots.cols() == 10);
    double reconstructed = 0.0;
    for (int j = 0; j < 10; ++j) reconstructed += history.snapshots.columns(0, j);
    CHECK(reconstructed == doctest::Approx(history.displacements.back()[0]));
  }
  SUBCASE("total-displacement snapshots on demand") {
    const SolveHistory alt = run_reference(m, control, 3, true);
    CHECK(alt.snapshots.columns(0, 2) == doctest::Approx(alt.displacements[2][0]));
  }
}

TEST_CASE("fully failed structure raises ControlFailure") {
  const LatticeModel m = single_bar();
  DamageState state = DamageState::zero(1);
  state.d[0] = 1.0;
  state.history[0] = 2.0;
  Eigen::VectorXd u(1);
  u[0] = 1.5;
  IncrementControl control;
  control.delta_d_max = 0.1;
  control.lambda_max = 10.0;
  ArcMemory memory;
  const Eigen::VectorXd no_predictor = Eigen::VectorXd::Zero(1);
  CHECK_THROWS_AS(arc_length_step(m, state, u, no_predictor, 0.0, control, memory),
                  ControlFailure);
}

TEST_CASE("empty run") {
  const LatticeModel m = single_bar();
  const SolveHistory history = run_reference(m, IncrementControl{}, 0);
  CHECK(history.records.empty());
  CHECK(history.snapshots.cols() == 0);
}

TEST_CASE("reference run on a tower: equilibrium and damage invariants") {
  const LatticeModel m = small_tower(2, 2, 3);
  IncrementControl control;
  control.delta_d_max = 0.08;
  control.newton_tol = 1e-9;
  const SolveHistory history = run_reference(m, control, 6);
  REQUIRE(history.records.size() == 6);

  Eigen::VectorXd d_prev = Eigen::VectorXd::Zero(m.num_bars());
  for (size_t i = 0; i < history.records.size(); ++i) {
    const auto& rec = history.records[i];
    CHECK(rec.residual_rel <= 1e-9);
    CHECK(std::abs(rec.max_delta_d - 0.08) <= 1e-3 * 0.08);
    const Eigen::VectorXd& d = history.states[i].d;
    CHECK(d.minCoeff() >= 0.0);
    CHECK(d.maxCoeff() <= 1.0);
    CHECK(((d - d_prev).minCoeff()) >= -1e-15);  // irreversibility
    d_prev = d;
  }
}

TEST_CASE("identical runs are bit identical") {
  const LatticeModel m = small_tower(1, 1, 2);
  IncrementControl control;
  control.delta_d_max = 0.07;
  const SolveHistory a = run_reference(m, control, 4);
  const SolveHistory b = run_reference(m, control, 4);
  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].lambda == b.records[i].lambda);
    CHECK(a.records[i].deflection == b.records[i].deflection);
    CHECK((a.displacements[i] - b.displacements[i]).cwiseAbs().maxCoeff() == 0.0);
  }
}
