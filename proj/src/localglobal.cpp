#include "latred/localglobal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "latred/log.hpp"

namespace latred {

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

Splitting Splitting::from_dofs(std::vector<int> dofs, int n_u, int epoch) {
  std::sort(dofs.begin(), dofs.end());
  dofs.erase(std::unique(dofs.begin(), dofs.end()), dofs.end());
  Splitting s;
  s.fully_resolved = std::move(dofs);
  s.n_u = n_u;
  s.epoch = epoch;
  s.pos_in_f.assign(n_u, -1);
  for (size_t i = 0; i < s.fully_resolved.size(); ++i) {
    const int dof = s.fully_resolved[i];
    if (dof < 0 || dof >= n_u) throw Error("splitting: dof out of range");
    s.pos_in_f[dof] = static_cast<int>(i);
  }
  return s;
}

Splitting Splitting::all(int n_u, int epoch) {
  std::vector<int> dofs(n_u);
  std::iota(dofs.begin(), dofs.end(), 0);
  return from_dofs(std::move(dofs), n_u, epoch);
}

Splitting select_fully_resolved(const LatticeModel& model, const Eigen::VectorXd& d_prev,
                                const Eigen::VectorXd& d_curr, const SplitParams& params,
                                int epoch) {
  const int n_u = model.num_free_dofs();
  const Eigen::VectorXd dd = d_curr - d_prev;
  const double global_max = dd.size() > 0 ? dd.maxCoeff() : 0.0;
  if (global_max <= 0.0) return Splitting::none(n_u, epoch);

  std::vector<char> resolved(n_u, 0);
  std::vector<char> seeded(model.num_bars(), 0);
  int n_f = 0;

  auto node_free_dofs_resolved = [&](int node) {
    for (int c = 0; c < 3; ++c) {
      const int fi = model.free_index(3 * node + c);
      if (fi >= 0 && !resolved[fi]) return false;
    }
    return true;
  };

  const double cap = params.k_locglo * static_cast<double>(n_u);
  while (true) {
    // Worst remaining element: not seeded yet and not already fully covered.
    int pick = -1;
    for (const auto& bar : model.bars()) {
      if (seeded[bar.id]) continue;
      if (node_free_dofs_resolved(bar.k) && node_free_dofs_resolved(bar.l)) continue;
      if (pick < 0 || dd[bar.id] > dd[pick]) pick = bar.id;
    }
    if (pick < 0 || dd[pick] < params.k_dam * global_max) break;

    const Eigen::Vector3d center = model.bar_center(model.bars()[pick]);
    for (const auto& node : model.nodes()) {
      if ((node.position - center).norm() > params.rho_s) continue;
      for (int c = 0; c < 3; ++c) {
        const int fi = model.free_index(3 * node.id + c);
        if (fi >= 0 && !resolved[fi]) {
          resolved[fi] = 1;
          ++n_f;
        }
      }
    }
    seeded[pick] = 1;
    if (static_cast<double>(n_f) > cap) break;
  }

  std::vector<int> dofs;
  dofs.reserve(n_f);
  for (int i = 0; i < n_u; ++i)
    if (resolved[i]) dofs.push_back(i);
  return Splitting::from_dofs(std::move(dofs), n_u, epoch);
}

// ---------------------------------------------------------------------------
// Coupling operator
// ---------------------------------------------------------------------------

CouplingOperator::CouplingOperator(const Eigen::MatrixXd& c, const Splitting& split)
    : c_(&c), split_(&split) {
  if (c.rows() != split.n_u) throw Error("coupling operator: basis rows != n_u");
}

Eigen::VectorXd CouplingOperator::expand(const Eigen::VectorXd& alpha,
                                         const Eigen::VectorXd& du_f) const {
  if (alpha.size() != n_c() || du_f.size() != n_f())
    throw Error("coupling operator: state dimensions mismatch");
  Eigen::VectorXd out = (*c_) * alpha;
  for (int i = 0; i < n_f(); ++i) out[split_->fully_resolved[i]] = du_f[i];
  return out;
}

Eigen::VectorXd CouplingOperator::expand(const Eigen::VectorXd& x) const {
  return expand(x.head(n_c()), x.tail(n_f()));
}

Eigen::VectorXd CouplingOperator::restrict_to(const Eigen::VectorXd& v) const {
  if (v.size() != n_u()) throw Error("coupling operator: vector dimension mismatch");
  Eigen::VectorXd masked = v;
  Eigen::VectorXd out(n_c() + n_f());
  for (int i = 0; i < n_f(); ++i) {
    const int dof = split_->fully_resolved[i];
    out[n_c() + i] = v[dof];
    masked[dof] = 0.0;
  }
  out.head(n_c()) = c_->transpose() * masked;
  return out;
}

Eigen::MatrixXd CouplingOperator::masked_basis() const {
  Eigen::MatrixXd masked = *c_;
  for (int dof : split_->fully_resolved) masked.row(dof).setZero();
  return masked;
}

Eigen::MatrixXd CouplingOperator::basis_on_resolved() const {
  Eigen::MatrixXd cf(n_f(), n_c());
  for (int i = 0; i < n_f(); ++i) cf.row(i) = c_->row(split_->fully_resolved[i]);
  return cf;
}

// ---------------------------------------------------------------------------
// Reduced tangent
// ---------------------------------------------------------------------------

ReducedTangentBlocks reduced_tangent(const CouplingOperator& a,
                                     const Eigen::SparseMatrix<double>& k_t) {
  ReducedTangentBlocks blocks;
  const Splitting& split = a.splitting();
  const Eigen::MatrixXd masked = a.masked_basis();
  const Eigen::MatrixXd k_masked = k_t * masked;

  blocks.Krr = masked.transpose() * k_masked;
  blocks.Krr = 0.5 * (blocks.Krr + blocks.Krr.transpose().eval());

  // K^(fr): resolved rows of K P^(r) C. K^(rf) is its transpose.
  const int n_f = a.n_f();
  blocks.Kfr.resize(n_f, a.n_c());
  for (int i = 0; i < n_f; ++i) blocks.Kfr.row(i) = k_masked.row(split.fully_resolved[i]);

  // K^(ff): sparse submatrix of the tangent at the resolved dofs.
  std::vector<Eigen::Triplet<double>> trip;
  for (int col = 0; col < k_t.outerSize(); ++col) {
    const int fc = split.pos_in_f[col];
    if (fc < 0) continue;
    for (Eigen::SparseMatrix<double>::InnerIterator it(k_t, col); it; ++it) {
      const int fr = split.pos_in_f[it.row()];
      if (fr >= 0) trip.emplace_back(fr, fc, it.value());
    }
  }
  blocks.Kff.resize(n_f, n_f);
  blocks.Kff.setFromTriplets(trip.begin(), trip.end());
  return blocks;
}

// ---------------------------------------------------------------------------
// Enrichment
// ---------------------------------------------------------------------------

ReducedBasis enrich_basis(SnapshotMatrix& store, const ReducedBasis& current,
                          const std::vector<Eigen::VectorXd>& solutions) {
  bool appended = false;
  for (const auto& v : solutions) {
    Eigen::VectorXd w = v;
    if (current.n_c() > 0) w -= current.C * (current.C.transpose() * v);
    if (w.norm() <= 1e-14 * std::max(1.0, v.norm())) continue;
    store.append(w, "enrich");
    appended = true;
  }
  if (!appended) return current;
  return compute_pod_basis(store, Truncation::by_order(store.cols()));
}

// ---------------------------------------------------------------------------
// Local/global Newton
// ---------------------------------------------------------------------------

namespace {

std::pair<Eigen::VectorXd, Eigen::VectorXd> dense_reduced_solve(
    const CouplingOperator& a, const Eigen::SparseMatrix<double>& k,
    const Eigen::VectorXd& rr) {
  const ReducedTangentBlocks blocks = reduced_tangent(a, k);
  const int n_c = blocks.n_c(), n_f = blocks.n_f();
  Eigen::MatrixXd kr(n_c + n_f, n_c + n_f);
  kr.topLeftCorner(n_c, n_c) = blocks.Krr;
  kr.topRightCorner(n_c, n_f) = blocks.Kfr.transpose();
  kr.bottomLeftCorner(n_f, n_c) = blocks.Kfr;
  kr.bottomRightCorner(n_f, n_f) = Eigen::MatrixXd(blocks.Kff);
  // Minimum-norm solve: masked-away basis columns leave exact null
  // directions in the reduced operator.
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(kr);
  if (cod.rank() == 0) throw SingularTangent("reduced linearized system is singular");
  const Eigen::VectorXd dx = cod.solve(rr);
  if (!dx.allFinite()) throw SingularTangent("reduced linearized system is singular");
  return {dx.head(n_c), dx.tail(n_f)};
}

}  // namespace

namespace {

/// Indices of basis columns that keep a meaningful component on the reduced
/// dofs. Columns essentially inside the resolved set carry no reduced
/// coordinate: their K^(rr) rows vanish while their residual entries do not,
/// which otherwise floors the attainable Newton residual.
std::vector<int> active_basis_columns(const Eigen::MatrixXd& c, const Splitting& split) {
  std::vector<int> active;
  for (int j = 0; j < c.cols(); ++j) {
    double masked_sq = c.col(j).squaredNorm();
    for (int dof : split.fully_resolved) masked_sq -= c(dof, j) * c(dof, j);
    if (std::sqrt(std::max(0.0, masked_sq)) > 1e-5 * c.col(j).norm()) active.push_back(j);
  }
  return active;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& c, const std::vector<int>& cols) {
  Eigen::MatrixXd out(c.rows(), cols.size());
  for (size_t j = 0; j < cols.size(); ++j) out.col(j) = c.col(cols[j]);
  return out;
}

}  // namespace

LgResult newton_solve_localglobal(const LatticeModel& model, const DamageState& committed,
                                  const Eigen::VectorXd& u_n, ReducedBasis& basis,
                                  const Splitting& split, double lambda,
                                  const LocalGlobalOptions& options, const CorrectionHook* hook,
                                  const Eigen::VectorXd* du0) {
  LgResult res;
  res.du_f = Eigen::VectorXd::Zero(split.n_f());
  if (basis.n_c() + split.n_f() == 0) {
    res.alpha = Eigen::VectorXd::Zero(0);
    return res;  // no approximation space at all
  }

  std::vector<int> active = active_basis_columns(basis.C, split);
  Eigen::MatrixXd c_active = select_columns(basis.C, active);
  res.alpha = Eigen::VectorXd::Zero(c_active.cols());
  if (du0 != nullptr && du0->size() == split.n_u) {
    const CouplingOperator a0(c_active, split);
    const Eigen::VectorXd x0 = a0.restrict_to(*du0);
    res.alpha = x0.head(a0.n_c());
    res.du_f = x0.tail(a0.n_f());
  }

  const Eigen::VectorXd fext = external_forces(model, lambda);
  const double fext_norm = fext.norm();
  const double full_scale = fext_norm > 0.0 ? fext_norm : 1.0;
  int refilters = 0;
  double initial_rel = -1.0;
  double prev_rel = std::numeric_limits<double>::infinity();
  int stagnant = 0;

  for (int it = 0; it <= options.max_iters; ++it) {
    CouplingOperator a(c_active, split);
    res.u = u_n + a.expand(res.alpha, res.du_f);
    res.trial = update_damage(committed, model, model.expand(res.u));
    const Eigen::VectorXd r_full = internal_forces(model, res.u, res.trial) + fext;
    Eigen::VectorXd rr = a.restrict_to(r_full);
    double scale_r = a.restrict_to(fext).norm();
    if (scale_r == 0.0) scale_r = 1.0;

    res.iters = it;
    res.full_rel = r_full.norm() / full_scale;
    res.reduced_rel = rr.norm() / scale_r;
    if (!std::isfinite(res.reduced_rel)) break;
    if (initial_rel < 0.0) initial_rel = res.reduced_rel;
    if (res.reduced_rel > 1e3 * std::max(initial_rel, 1.0)) break;  // runaway iterate

    if (hook != nullptr) {
      InnerIterationContext ctx{model,       res.u,        res.trial, r_full,
                                res.reduced_rel, res.full_rel, it,        basis.C};
      if ((*hook)(ctx)) {
        ++res.corrections;
        // Rebuild the active view and re-derive the coordinates from the
        // current increment (exact: the appended columns are orthogonal).
        const Eigen::VectorXd du_now = res.u - u_n;
        active = active_basis_columns(basis.C, split);
        c_active = select_columns(basis.C, active);
        a = CouplingOperator(c_active, split);
        const Eigen::VectorXd x_now = a.restrict_to(du_now);
        res.alpha = x_now.head(a.n_c());
        res.du_f = x_now.tail(a.n_f());
        rr = a.restrict_to(r_full);
        scale_r = a.restrict_to(fext).norm();
        if (scale_r == 0.0) scale_r = 1.0;
        res.reduced_rel = rr.norm() / scale_r;
      }
    }

    if (res.reduced_rel <= options.tol) {
      res.converged = true;
      break;
    }
    if (it == options.max_iters) break;
    // Plain Newton can cycle across the loading/unloading kink of the
    // damage law right next to the solution; damp the step geometrically
    // while no progress is made and give up once damping stops helping.
    stagnant = res.reduced_rel > 0.9 * prev_rel ? stagnant + 1 : 0;
    if (stagnant >= 6) break;
    prev_rel = res.reduced_rel;

    LgIterationLog log;
    log.newton_iter = it;
    log.reduced_rel = res.reduced_rel;
    log.full_rel = res.full_rel;

    auto attempt = [&](const Eigen::SparseMatrix<double>& k, LgIterationLog& lg) {
      const ReducedTangentBlocks blocks = reduced_tangent(a, k);
      CondenseOptions copts = options.condense;
      copts.pseudo_inverse_krr = true;  // masked-away basis columns drop out routinely
      const CondensedSystem sys = condense(blocks, rr.head(a.n_c()), rr.tail(a.n_f()), copts);
      // The augmentation uses every basis column: vectors inactive on the
      // reduced side are precisely the local modes worth deflating.
      Eigen::MatrixXd cf_full(split.n_f(), basis.n_c());
      for (int i = 0; i < split.n_f(); ++i) cf_full.row(i) = basis.C.row(split.fully_resolved[i]);
      const Augmentation aug = Augmentation::build(sys.S_P, cf_full);
      const Preconditioner precond = diagonal_preconditioner(sys);
      auto [duf, rep] = augmented_pcg(sys.S_P, sys.R_C, aug, precond, options.cg);
      lg.cg = rep;
      if (options.shadow_unaugmented && a.n_f() > 0) {
        // Observation only: the plain solve may break down where the
        // deflated one sails through.
        try {
          auto [ignored, plain] =
              augmented_pcg(sys.S_P, sys.R_C, Augmentation{}, precond, options.cg);
          (void)ignored;
          lg.shadow_iterations = plain.iterations;
        } catch (const KrylovBreakdown&) {
          lg.shadow_breakdown = true;
        }
      }
      Eigen::VectorXd dalpha = back_substitute(sys, rr.head(a.n_c()), duf);
      return std::make_pair(std::move(dalpha), std::move(duf));
    };

    // Fallback chain: the consistent tangent can lose definiteness (or fold
    // K^(rr)) past a limit point, where the secant operator stays SPD. A
    // rank-deficient K^(rr) against the *secant* stiffness means the basis
    // itself is degenerate against the structure and gets filtered.
    std::pair<Eigen::VectorXd, Eigen::VectorXd> step;
    const Eigen::SparseMatrix<double> k_consistent =
        tangent_stiffness(model, res.u, res.trial, TangentMode::Consistent);
    auto secant_attempt = [&]() {
      log.secant_fallback = true;
      const Eigen::SparseMatrix<double> k_secant =
          tangent_stiffness(model, res.u, res.trial, TangentMode::Secant);
      try {
        return attempt(k_secant, log);
      } catch (const KrylovBreakdown&) {
        log.dense_fallback = true;
        return dense_reduced_solve(a, k_consistent, rr);
      }
    };
    try {
      try {
        step = attempt(k_consistent, log);
      } catch (const KrylovBreakdown&) {
        step = secant_attempt();
      } catch (const SingularReducedBlock&) {
        step = secant_attempt();
      }
    } catch (const SingularReducedBlock& e) {
      // Refilter only a genuinely partial deficiency; a fully degenerate
      // block means the state is unsalvageable (e.g. saturated damage).
      if (e.keep.cols() == 0 || ++refilters > 2) break;
      log_debug("localglobal: rank-deficient K^(rr), filtering basis %d -> %d columns",
                basis.n_c(), static_cast<int>(e.keep.cols()));
      basis.C = (basis.C * e.keep).eval();
      active = active_basis_columns(basis.C, split);
      c_active = select_columns(basis.C, active);
      res.alpha = Eigen::VectorXd::Zero(c_active.cols());
      res.du_f.setZero();
      continue;
    } catch (const SingularTangent&) {
      break;
    }

    const double damping = stagnant > 0 ? std::pow(0.5, stagnant) : 1.0;
    res.alpha += damping * step.first;
    res.du_f += damping * step.second;
    res.logs.push_back(std::move(log));
  }
  return res;
}

}  // namespace latred
