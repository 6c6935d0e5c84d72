#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace polyflow;
using namespace polyflow::testing;

namespace {

CanonicalModel two_variable_model() {
  CanonicalModel m;
  m.variable_names = {"x", "y"};
  m.S = (Matrix(1, 2) << 1, -1).finished();
  m.h = Vector::Zero(1);
  m.A_c.resize(0, 2);
  m.b_c.resize(0);
  m.add_bounds({{0.0, 1.0}, {0.0, 1.0}});
  return m;
}

}  // namespace

TEST(Canonicalize, StacksEqualitiesAndBounds) {
  const HPolytope H = canonicalize(two_variable_model());
  ASSERT_EQ(H.rows(), 6);
  EXPECT_EQ(H.dim(), 2);
  EXPECT_EQ(H.A().row(0), (Matrix(1, 2) << 1, -1).finished());
  EXPECT_EQ(H.A().row(1), (Matrix(1, 2) << -1, 1).finished());
  EXPECT_TRUE(H.contains(Vector::Constant(2, 0.3), 0.0));
  EXPECT_FALSE(H.contains((Vector(2) << 0.3, 0.4).finished()));
}

TEST(Canonicalize, EmptyInequalityBlock) {
  CanonicalModel m = two_variable_model();
  m.A_c.resize(0, 2);
  m.b_c.resize(0);
  const HPolytope H = canonicalize(m);
  ASSERT_EQ(H.rows(), 2);
  EXPECT_EQ(H.A().row(0), -H.A().row(1));
}

TEST(Canonicalize, ExampleModel) {
  const CanonicalModel m = build_example_model();
  ASSERT_EQ(m.S.rows(), 8);
  ASSERT_EQ(m.S.cols(), 13);
  // Row A: -1 at v1, +1 at a_in.
  Vector rowA = Vector::Zero(13);
  rowA(1) = -1.0;
  rowA(12) = 1.0;
  EXPECT_EQ(Vector(m.S.row(0).transpose()), rowA);
  const HPolytope H = canonicalize(m);
  EXPECT_EQ(H.rows(), 2 * 8 + 2 * 13);
  EXPECT_EQ(H.dim(), 13);
}

TEST(Canonicalize, DimensionMismatchThrows) {
  CanonicalModel m = two_variable_model();
  m.S = Matrix::Ones(1, 3);
  EXPECT_THROW(canonicalize(m), DimensionError);
}

TEST(HPolytopeType, RejectsZeroRow) {
  Matrix A = Matrix::Identity(2, 2);
  A(1, 1) = 0.0;
  EXPECT_THROW(HPolytope(A, Vector::Ones(2)), DomainError);
}

TEST(SolveLP, UnitSquare) {
  const HPolytope sq = box(Vector::Zero(2), Vector::Ones(2));
  const LPSolution s = solve_lp(Vector::Unit(2, 0), sq, true);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.objective, 1.0, 1e-12);
}

TEST(SolveLP, TriangleMatchesVertexEnumeration) {
  Matrix A(3, 2);
  A << -1, 0, 0, -1, 1, 1;
  const HPolytope tri(A, (Vector(3) << 0, 0, 1).finished());
  const LPSolution s = solve_lp(Vector::Ones(2), tri, true);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.objective, 1.0, 1e-12);
  EXPECT_TRUE(tri.contains(s.x));
}

TEST(SolveLP, Infeasible) {
  Matrix A(2, 1);
  A << 1, -1;
  const LPSolution s = solve_lp(Vector::Ones(1), A, (Vector(2) << 0, -1).finished(), true);
  EXPECT_EQ(s.status, LPStatus::Infeasible);
}

TEST(SolveLP, Unbounded) {
  Matrix A(1, 2);
  A << 1, 0;
  const LPSolution s = solve_lp(Vector::Unit(2, 1), A, Vector::Ones(1), true);
  EXPECT_EQ(s.status, LPStatus::Unbounded);
}

TEST(SolveLP, MatchesExhaustiveVerticesOnSmallPolytopes) {
  RandomStream rng(101);
  for (int trial = 0; trial < 40; ++trial) {
    const Index K = 2 + trial % 2;
    const HPolytope H = random_polytope(K, 3, rng);
    const Matrix V = enumerate_vertices(H);
    if (V.cols() > 12) continue;
    const Vector c = rng.normal_vector(K);
    const LPSolution s = solve_lp(c, H, true);
    ASSERT_TRUE(s.optimal());
    EXPECT_NEAR(s.objective, (c.transpose() * V).maxCoeff(), 1e-9);
    const LPSolution lo = solve_lp(c, H, false);
    EXPECT_NEAR(lo.objective, (c.transpose() * V).minCoeff(), 1e-9);
  }
}

TEST(SolveLP, Deterministic) {
  RandomStream rng(3);
  const HPolytope H = random_polytope(4, 10, rng);
  const Vector c = rng.normal_vector(4);
  const LPSolution a = solve_lp(c, H, true);
  const LPSolution b = solve_lp(c, H, true);
  EXPECT_EQ(a.x, b.x);
}

TEST(RemoveRedundant, DuplicateRowRemoved) {
  Matrix A(5, 2);
  A << 1, 0, 1, 0, -1, 0, 0, 1, 0, -1;
  const HPolytope H(A, (Vector(5) << 1, 1, 0, 1, 0).finished());
  EXPECT_EQ(remove_redundant(H).rows(), 4);
}

TEST(RemoveRedundant, LooseRowRemoved) {
  Matrix A(5, 2);
  A << 1, 0, -1, 0, 0, 1, 0, -1, 1, 0;
  const HPolytope H(A, (Vector(5) << 1, 0, 1, 0, 2).finished());
  const HPolytope R = remove_redundant(H);
  ASSERT_EQ(R.rows(), 4);
  for (Index i = 0; i < R.rows(); ++i) EXPECT_FALSE(R.A()(i, 0) == 1.0 && R.b()(i) == 2.0);
}

TEST(RemoveRedundant, ExampleModelDropsImpliedRows) {
  const CanonicalModel m = build_example_model();
  const HPolytope H = canonicalize(m);
  const ImplicitEqualities eq = find_implicit_equalities(H);
  const ChebyshevBall ball = chebyshev_center(eq.residual, eq.S_plus, eq.h_plus);
  const AffineEmbedding emb = rref_embedding(eq.S_plus, eq.h_plus, ball.center, m.variable_names);
  const HPolytope full = project_to_full_dim(eq.residual, emb);
  const HPolytope reduced = remove_redundant(full);
  EXPECT_LT(reduced.rows(), full.rows());
  // Every dropped row is implied: max a_i.v over the reduced set stays below b_i.
  for (Index i = 0; i < full.rows(); ++i) {
    const LPSolution s = solve_lp(full.A().row(i).transpose(), reduced, true);
    ASSERT_TRUE(s.optimal());
    EXPECT_LE(s.objective, full.b()(i) + 1e-7);
  }
}

TEST(RemoveRedundant, PreservesFeasibleSet) {
  RandomStream rng(17);
  const HPolytope H = random_polytope(3, 12, rng);
  const HPolytope R = remove_redundant(H);
  EXPECT_LE(R.rows(), H.rows());
  for (int i = 0; i < 10000; ++i) {
    Vector v(3);
    for (Index k = 0; k < 3; ++k) v(k) = rng.uniform(-2.5, 2.5);
    const double margin = (H.b() - H.A() * v).cwiseAbs().minCoeff();
    if (margin < 1e-7) continue;
    EXPECT_EQ(H.contains(v, 0.0), R.contains(v, 0.0));
  }
}

TEST(ImplicitEqualities, OppositeBoundsGiveEquality) {
  Matrix A(4, 2);
  A << 1, 0, -1, 0, 0, 1, 0, -1;
  const HPolytope H(A, (Vector(4) << 1, -1, 1, 1).finished());
  const ImplicitEqualities eq = find_implicit_equalities(H);
  ASSERT_EQ(eq.S_plus.rows(), 1);
  EXPECT_NEAR(std::abs(eq.S_plus(0, 0)), 1.0, 1e-12);
  EXPECT_NEAR(eq.h_plus(0) / eq.S_plus(0, 0), 1.0, 1e-12);
  EXPECT_EQ(eq.residual.rows(), 2);
}

TEST(ImplicitEqualities, CubeHasNone) {
  const ImplicitEqualities eq = find_implicit_equalities(cube(3));
  EXPECT_EQ(eq.S_plus.rows(), 0);
  EXPECT_EQ(eq.residual.rows(), 6);
}

TEST(ImplicitEqualities, ExampleModelFixesInflow) {
  const CanonicalModel m = build_example_model();
  const ImplicitEqualities eq = find_implicit_equalities(canonicalize(m));
  // e_{a_in} lies in the row space of S+, so a_in is pinned.
  const Vector e = Vector::Unit(13, 12);
  const Vector coef = eq.S_plus.transpose().colPivHouseholderQr().solve(e);
  EXPECT_LT((eq.S_plus.transpose() * coef - e).norm(), 1e-9);
  EXPECT_NEAR(coef.dot(eq.h_plus), 10.0, 1e-9);
}

TEST(EnumerateVertices, Cube) {
  const Matrix V = enumerate_vertices(cube(3));
  EXPECT_EQ(V.cols(), 8);
  EXPECT_NEAR(V.cwiseAbs().minCoeff(), 1.0, 1e-12);
}
