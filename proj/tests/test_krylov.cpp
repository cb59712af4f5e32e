#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "latred/krylov.hpp"
#include "test_helpers.hpp"

using namespace latred;
using namespace latred::testing;

namespace {

Eigen::SparseMatrix<double> to_sparse(const Eigen::MatrixXd& m) {
  Eigen::SparseMatrix<double> s(m.rows(), m.cols());
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      if (m(i, j) != 0.0) trip.emplace_back(i, j, m(i, j));
  s.setFromTriplets(trip.begin(), trip.end());
  return s;
}

ReducedTangentBlocks blocks_from_dense(const Eigen::MatrixXd& m, int n_c) {
  const int n_f = static_cast<int>(m.rows()) - n_c;
  ReducedTangentBlocks b;
  b.Krr = m.topLeftCorner(n_c, n_c);
  b.Kfr = m.bottomLeftCorner(n_f, n_c);
  b.Kff = to_sparse(m.bottomRightCorner(n_f, n_f));
  return b;
}

/// Full two-level pipeline for K x = rhs; returns (x_r, x_f).
std::pair<Eigen::VectorXd, Eigen::VectorXd> pipeline_solve(const ReducedTangentBlocks& blocks,
                                                           const Eigen::VectorXd& rhs,
                                                           const Eigen::MatrixXd& c_f,
                                                           const CgOptions& cg = {1e-13, 60, false},
                                                           const CondenseOptions& co = {}) {
  const CondensedSystem sys = condense(blocks, rhs.head(blocks.n_c()), rhs.tail(blocks.n_f()), co);
  const Augmentation aug = Augmentation::build(sys.S_P, c_f);
  auto [x_f, report] = augmented_pcg(sys, aug, cg);
  (void)report;
  const Eigen::VectorXd x_r = back_substitute(sys, rhs.head(blocks.n_c()), x_f);
  return {x_r, x_f};
}

}  // namespace

TEST_CASE("condense") {
  SUBCASE("decoupled blocks leave Kff and the rhs untouched") {
    Eigen::MatrixXd m(3, 3);
    m << 2, 0, 0, 0, 3, 1, 0, 1, 4;
    const ReducedTangentBlocks b = blocks_from_dense(m, 1);
    Eigen::VectorXd rhs(3);
    rhs << 5, 6, 7;
    const CondensedSystem sys = condense(b, rhs.head(1), rhs.tail(2));
    CHECK((sys.S_P.matrix() - m.bottomRightCorner(2, 2)).norm() ==
          doctest::Approx(0.0).epsilon(1e-15));
    CHECK((sys.R_C - rhs.tail(2)).norm() == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("two-block hand value") {
    Eigen::MatrixXd m(2, 2);
    m << 4, 1, 1, 2;
    const ReducedTangentBlocks b = blocks_from_dense(m, 1);
    Eigen::VectorXd rhs(2);
    rhs << 1, 1;
    const CondensedSystem sys = condense(b, rhs.head(1), rhs.tail(1));
    CHECK(sys.S_P.matrix()(0, 0) == doctest::Approx(1.75));
    CHECK(sys.R_C[0] == doctest::Approx(1.0 - 0.25));  // rhs_f - Kfr Krr^-1 rhs_r
  }
  SUBCASE("no reduced dofs: S_P is the full tangent") {
    std::mt19937 rng(3);
    const Eigen::MatrixXd m = random_spd(4, rng);
    const ReducedTangentBlocks b = blocks_from_dense(m, 0);
    Eigen::VectorXd rhs = random_vector(4, rng);
    const CondensedSystem sys = condense(b, Eigen::VectorXd(0), rhs);
    CHECK((sys.S_P.matrix() - m).norm() == doctest::Approx(0.0).epsilon(1e-14));
    CHECK((sys.R_C - rhs).norm() == 0.0);
  }
  SUBCASE("singular Krr is reported with the directions to keep") {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 3);
    m(0, 0) = 1.0;  // second reduced direction is degenerate
    m(2, 2) = 1.0;
    const ReducedTangentBlocks b = blocks_from_dense(m, 2);
    Eigen::VectorXd rhs = Eigen::VectorXd::Ones(3);
    CHECK_THROWS_AS(condense(b, rhs.head(2), rhs.tail(1)), SingularReducedBlock);
    try {
      condense(b, rhs.head(2), rhs.tail(1));
    } catch (const SingularReducedBlock& e) {
      CHECK(e.keep.cols() == 1);
    }
  }
}

TEST_CASE("back_substitute") {
  Eigen::MatrixXd m(2, 2);
  m << 4, 1, 1, 2;
  const ReducedTangentBlocks b = blocks_from_dense(m, 1);
  Eigen::VectorXd rhs(2);
  rhs << 3, 5;
  const CondensedSystem sys = condense(b, rhs.head(1), rhs.tail(1));

  SUBCASE("zero inputs give zero coordinates") {
    const Eigen::VectorXd x = back_substitute(sys, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1));
    CHECK(x[0] == 0.0);
  }
  SUBCASE("hand value") {
    Eigen::VectorXd x_f(1);
    x_f << 2.0;
    const Eigen::VectorXd x_r = back_substitute(sys, rhs.head(1), x_f);
    CHECK(x_r[0] == doctest::Approx(0.25 * (3.0 - 1.0 * 2.0)));
  }
  SUBCASE("combined solve matches the dense solution") {
    const auto [x_r, x_f] = pipeline_solve(b, rhs, Eigen::MatrixXd(1, 0));
    Eigen::VectorXd x(2);
    x << x_r[0], x_f[0];
    const Eigen::VectorXd expected = m.ldlt().solve(rhs);
    CHECK((x - expected).norm() < 1e-10);
  }
  SUBCASE("no master dofs: the pure reduced Newton step") {
    std::mt19937 rng(5);
    const Eigen::MatrixXd krr = random_spd(3, rng);
    ReducedTangentBlocks pure;
    pure.Krr = krr;
    pure.Kfr.resize(0, 3);
    pure.Kff.resize(0, 0);
    const Eigen::VectorXd rhs_r = random_vector(3, rng);
    const CondensedSystem sys0 = condense(pure, rhs_r, Eigen::VectorXd(0));
    const Eigen::VectorXd x_r = back_substitute(sys0, rhs_r, Eigen::VectorXd(0));
    CHECK((krr * x_r - rhs_r).norm() < 1e-12);
  }
}

TEST_CASE("coarse_init") {
  std::mt19937 rng(7);
  SUBCASE("rhs orthogonal to the augmentation span gives zero") {
    const Eigen::MatrixXd s_p = random_spd(4, rng);
    const CondensedSystem sys{SymmetricOperator(s_p), Eigen::VectorXd(4), {}, {}, 0, 4};
    Eigen::MatrixXd c_f = Eigen::MatrixXd::Zero(4, 1);
    c_f(0, 0) = 1.0;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(4);
    rhs[1] = 2.0;  // orthogonal to e1
    CondensedSystem sys2 = sys;
    sys2.R_C = rhs;
    const Augmentation aug = Augmentation::build(sys2.S_P, c_f);
    CHECK(coarse_init(sys2, aug).norm() == doctest::Approx(0.0).epsilon(1e-14));
  }
  SUBCASE("full-span augmentation solves the system at initialization") {
    const Eigen::MatrixXd s_p = random_spd(5, rng);
    CondensedSystem sys{SymmetricOperator(s_p), random_vector(5, rng), {}, {}, 0, 5};
    const Augmentation aug = Augmentation::build(sys.S_P, Eigen::MatrixXd::Identity(5, 5));
    const Eigen::VectorXd x = coarse_init(sys, aug);
    CHECK((s_p * x - sys.R_C).norm() < 1e-10);
  }
  SUBCASE("single augmentation vector matches the dense formula") {
    const Eigen::MatrixXd s_p = random_spd(3, rng);
    CondensedSystem sys{SymmetricOperator(s_p), random_vector(3, rng), {}, {}, 0, 3};
    const Eigen::MatrixXd c_f = random_vector(3, rng);
    const Augmentation aug = Augmentation::build(sys.S_P, c_f);
    const Eigen::VectorXd expected =
        c_f * (c_f.transpose() * s_p * c_f).inverse() * c_f.transpose() * sys.R_C;
    CHECK((coarse_init(sys, aug) - expected).norm() < 1e-12);
  }
}

TEST_CASE("augmentation projector algebra") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 6 + static_cast<int>(rng() % 10);
    const int k = 1 + static_cast<int>(rng() % 4);
    const Eigen::MatrixXd s_p = random_spd(n, rng);
    Eigen::MatrixXd c_f(n, k);
    for (int j = 0; j < k; ++j) c_f.col(j) = random_vector(n, rng);
    const SymmetricOperator op(s_p);
    const Augmentation aug = Augmentation::build(op, c_f);

    // P^2 = P and C_f^T S_P P = 0.
    for (int probe = 0; probe < 4; ++probe) {
      const Eigen::VectorXd v = random_vector(n, rng);
      const Eigen::VectorXd pv = aug.project(v);
      CHECK((aug.project(pv) - pv).norm() <= 1e-10 * std::max(1.0, pv.norm()));
      CHECK((c_f.transpose() * (s_p * pv)).norm() <=
            1e-10 * s_p.norm() * std::max(1.0, v.norm()));
    }
  }
}

TEST_CASE("augmented_pcg") {
  std::mt19937 rng(13);
  SUBCASE("full-span augmentation converges at initialization") {
    const Eigen::MatrixXd s_p = random_spd(6, rng);
    const Eigen::VectorXd rhs = random_vector(6, rng);
    const SymmetricOperator op(s_p);
    const Augmentation aug = Augmentation::build(op, Eigen::MatrixXd::Identity(6, 6));
    auto [x, report] = augmented_pcg(op, rhs, aug, diagonal_preconditioner(op), {1e-10, 0, false});
    CHECK(report.iterations == 0);
    CHECK(report.converged);
    CHECK((s_p * x - rhs).norm() < 1e-9);
  }
  SUBCASE("identity operator converges in one iteration") {
    const Eigen::MatrixXd s_p = Eigen::MatrixXd::Identity(8, 8);
    const Eigen::VectorXd rhs = random_vector(8, rng);
    const SymmetricOperator op(s_p);
    auto [x, report] =
        augmented_pcg(op, rhs, Augmentation{}, diagonal_preconditioner(op), {1e-12, 0, false});
    CHECK(report.iterations == 1);
    CHECK((x - rhs).norm() < 1e-12);
  }
  SUBCASE("deflation reaches the direct solution within the deflated dimension") {
    const Eigen::MatrixXd s_p = random_spd(12, rng);
    const Eigen::VectorXd rhs = random_vector(12, rng);
    Eigen::MatrixXd c_f(12, 4);
    for (int j = 0; j < 4; ++j) c_f.col(j) = random_vector(12, rng);
    const SymmetricOperator op(s_p);
    const Augmentation aug = Augmentation::build(op, c_f);
    auto [x, report] = augmented_pcg(op, rhs, aug, diagonal_preconditioner(op), {1e-11, 0, false});
    CHECK(report.converged);
    CHECK(report.iterations <= 8);  // 12 unknowns minus 4 deflated directions
    CHECK((x - Eigen::VectorXd(s_p.ldlt().solve(rhs))).norm() <= 1e-10 * rhs.norm() * 10);
  }
  SUBCASE("iterate stays S_P-orthogonal to the augmentation space") {
    const Eigen::MatrixXd s_p = random_spd(10, rng);
    const Eigen::VectorXd rhs = random_vector(10, rng);
    Eigen::MatrixXd c_f(10, 2);
    c_f.col(0) = random_vector(10, rng);
    c_f.col(1) = random_vector(10, rng);
    const SymmetricOperator op(s_p);
    const Augmentation aug = Augmentation::build(op, c_f);
    auto [x, report] = augmented_pcg(op, rhs, aug, diagonal_preconditioner(op), {1e-12, 0, false});
    const Eigen::VectorXd x_k = x - aug.coarse_apply(rhs);
    CHECK((c_f.transpose() * (s_p * x_k)).norm() <=
          1e-10 * s_p.norm() * std::max(1.0, x_k.norm()));
    CHECK(report.converged);
  }
  SUBCASE("non-SPD operator raises a breakdown") {
    Eigen::MatrixXd s_p = Eigen::MatrixXd::Identity(4, 4);
    s_p(2, 2) = -1.0;
    const Eigen::VectorXd rhs = Eigen::VectorXd::Ones(4);
    const SymmetricOperator op(s_p);
    Preconditioner identity;
    identity.identity = true;
    CHECK_THROWS_AS(augmented_pcg(op, rhs, Augmentation{}, identity, {1e-12, 0, false}),
                    KrylovBreakdown);
  }
  SUBCASE("iteration budget exhaustion is reported, not thrown") {
    const Eigen::MatrixXd s_p = random_spd(20, rng);
    const Eigen::VectorXd rhs = random_vector(20, rng);
    const SymmetricOperator op(s_p);
    auto [x, report] =
        augmented_pcg(op, rhs, Augmentation{}, diagonal_preconditioner(op), {1e-14, 2, false});
    (void)x;
    CHECK(!report.converged);
    CHECK(report.iterations == 2);
  }
  SUBCASE("reported residual history is normalized by the condensed rhs") {
    const Eigen::MatrixXd s_p = random_spd(9, rng);
    const Eigen::VectorXd rhs = random_vector(9, rng);
    const SymmetricOperator op(s_p);
    auto [x, report] =
        augmented_pcg(op, rhs, Augmentation{}, diagonal_preconditioner(op), {1e-10, 0, false});
    (void)x;
    REQUIRE(!report.residual_history.empty());
    CHECK(report.residual_history.front() == doctest::Approx(1.0));
    CHECK(report.residual_history.back() < 1e-8);
  }
}

TEST_CASE("diagonal preconditioner") {
  SUBCASE("hand values") {
    CondensedSystem sys{SymmetricOperator(2.0 * Eigen::MatrixXd::Identity(3, 3)),
                        Eigen::VectorXd::Zero(3), {}, {}, 0, 3};
    const Preconditioner p = diagonal_preconditioner(sys);
    CHECK(p.inv_diag[0] == doctest::Approx(0.5));

    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
    d(0, 0) = 4.0;
    d(1, 1) = 1.75;
    const Preconditioner p2 = diagonal_preconditioner(SymmetricOperator(d));
    CHECK(p2.inv_diag[0] == doctest::Approx(0.25));
    CHECK(p2.inv_diag[1] == doctest::Approx(1.0 / 1.75));
  }
  SUBCASE("non-positive diagonal falls back to identity") {
    Eigen::MatrixXd d = Eigen::MatrixXd::Identity(2, 2);
    d(1, 1) = -3.0;
    const Preconditioner p = diagonal_preconditioner(SymmetricOperator(d));
    CHECK(p.identity);
  }
  SUBCASE("spread diagonal spectrum: Jacobi wins decisively") {
    const int n = 40;
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) d(i, i) = std::pow(10.0, 6.0 * i / (n - 1));
    const SymmetricOperator op(d);
    const Eigen::VectorXd rhs = Eigen::VectorXd::Ones(n);
    auto [xj, jacobi] =
        augmented_pcg(op, rhs, Augmentation{}, diagonal_preconditioner(op), {1e-12, 0, false});
    Preconditioner identity;
    identity.identity = true;
    auto [xi, plain] = augmented_pcg(op, rhs, Augmentation{}, identity, {1e-12, 0, false});
    (void)xj;
    (void)xi;
    CHECK(jacobi.iterations <= 2);
    CHECK(plain.iterations > 2);
    CHECK(jacobi.iterations < plain.iterations);
  }
}

TEST_CASE("two-level pipeline matches a dense direct solve") {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 6 + static_cast<int>(rng() % 45);  // n_c + n_f <= 50
    const int n_c = static_cast<int>(rng() % std::min(n, 10));
    const Eigen::MatrixXd m = random_spd(n, rng);
    const ReducedTangentBlocks blocks = blocks_from_dense(m, n_c);
    const Eigen::VectorXd rhs = random_vector(n, rng);
    const int n_f = n - n_c;
    const int n_aug = static_cast<int>(rng() % 4);
    Eigen::MatrixXd c_f(n_f, n_aug);
    for (int j = 0; j < n_aug; ++j) c_f.col(j) = random_vector(n_f, rng);

    const auto [x_r, x_f] = pipeline_solve(blocks, rhs, c_f);
    Eigen::VectorXd x(n);
    x.head(n_c) = x_r;
    x.tail(n_f) = x_f;
    const Eigen::VectorXd expected = m.ldlt().solve(rhs);
    CHECK((x - expected).norm() <= 1e-8 * expected.norm());
  }
}

TEST_CASE("explicit and implicit Schur complements agree") {
  std::mt19937 rng(19);
  const Eigen::MatrixXd m = random_spd(14, rng);
  const ReducedTangentBlocks blocks = blocks_from_dense(m, 3);
  const Eigen::VectorXd rhs = random_vector(14, rng);
  Eigen::MatrixXd c_f(11, 2);
  c_f.col(0) = random_vector(11, rng);
  c_f.col(1) = random_vector(11, rng);

  CondenseOptions explicit_opts;
  CondenseOptions implicit_opts;
  implicit_opts.explicit_schur_max = 0;
  const auto [xr1, xf1] = pipeline_solve(blocks, rhs, c_f, {1e-12, 0, false}, explicit_opts);
  const auto [xr2, xf2] = pipeline_solve(blocks, rhs, c_f, {1e-12, 0, false}, implicit_opts);
  CHECK((xr1 - xr2).norm() <= 1e-9 * std::max(1.0, xr1.norm()));
  CHECK((xf1 - xf2).norm() <= 1e-9 * std::max(1.0, xf1.norm()));
}

TEST_CASE("fixed point is independent of the preconditioner") {
  std::mt19937 rng(23);
  const Eigen::MatrixXd s_p = random_spd(16, rng);
  const Eigen::VectorXd rhs = random_vector(16, rng);
  Eigen::MatrixXd c_f(16, 3);
  for (int j = 0; j < 3; ++j) c_f.col(j) = random_vector(16, rng);
  const SymmetricOperator op(s_p);
  const Augmentation aug = Augmentation::build(op, c_f);

  auto [x_diag, r1] = augmented_pcg(op, rhs, aug, diagonal_preconditioner(op), {1e-12, 0, false});
  Preconditioner identity;
  identity.identity = true;
  auto [x_id, r2] = augmented_pcg(op, rhs, aug, identity, {1e-12, 0, false});
  CHECK(r1.converged);
  CHECK(r2.converged);
  CHECK((x_diag - x_id).norm() <= 1e-8 * std::max(1.0, x_id.norm()));
}

TEST_CASE("rank filtering drops collapsed augmentation columns") {
  std::mt19937 rng(29);
  const Eigen::MatrixXd s_p = random_spd(8, rng);
  Eigen::MatrixXd c_f(8, 3);
  c_f.col(0) = random_vector(8, rng);
  c_f.col(1) = c_f.col(0);  // duplicate
  c_f.col(2) = random_vector(8, rng);
  const SymmetricOperator op(s_p);
  const Augmentation aug = Augmentation::build(op, c_f);
  CHECK(aug.size() == 2);

  const Eigen::VectorXd rhs = random_vector(8, rng);
  auto [x, report] = augmented_pcg(op, rhs, aug, diagonal_preconditioner(op), {1e-11, 0, false});
  CHECK(report.converged);
  CHECK((s_p * x - rhs).norm() <= 1e-9 * rhs.norm());
}

TEST_CASE("optional full reorthogonalization gives the same solution") {
  std::mt19937 rng(31);
  const Eigen::MatrixXd s_p = random_spd(18, rng);
  const Eigen::VectorXd rhs = random_vector(18, rng);
  const SymmetricOperator op(s_p);
  auto [x1, r1] = augmented_pcg(op, rhs, Augmentation{}, diagonal_preconditioner(op),
                                {1e-12, 0, false});
  auto [x2, r2] = augmented_pcg(op, rhs, Augmentation{}, diagonal_preconditioner(op),
                                {1e-12, 0, true});
  CHECK(r1.converged);
  CHECK(r2.converged);
  CHECK((x1 - x2).norm() <= 1e-8 * std::max(1.0, x1.norm()));
}
