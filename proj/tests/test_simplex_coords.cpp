#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace polyflow;
using namespace polyflow::testing;

namespace {

VPolytope square() {
  Matrix V(2, 4);
  V << 1, -1, -1, 1, 1, 1, -1, -1;
  return VPolytope(V);
}

VPolytope triangle() {
  Matrix V(2, 3);
  V << 0, 2, 0, 0, 0, 1;
  return VPolytope(V);
}

double entropy(const Vector& l) { return -(l.array() * l.array().log()).sum(); }

/// Flat Dirichlet draw on n parts.
Vector dirichlet(RandomStream& rng, Index n) {
  Vector g(n);
  for (Index i = 0; i < n; ++i) g(i) = -std::log(rng.uniform_open());
  return g / g.sum();
}

Vector clr(const Vector& l) { return l.array().log() - l.array().log().mean(); }

/// Interior points as random convex combinations of the vertices.
Matrix interior_points(const VPolytope& P, Index n, RandomStream& rng) {
  Matrix X(P.dim(), n);
  for (Index j = 0; j < n; ++j) X.col(j) = P.V() * dirichlet(rng, P.num_vertices());
  return X;
}

}  // namespace

TEST(Mec, SimplexCoordinatesAreUnique) {
  const VPolytope T = triangle();
  const Vector v = (Vector(2) << 0.5, 0.3).finished();
  Matrix sys(3, 3);
  sys << T.V(), Matrix::Ones(1, 3);
  const Vector direct = sys.lu().solve((Vector(3) << v, 1.0).finished());
  EXPECT_LT((mec(v, T) - direct).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(Mec, CentroidGivesUniformWeights) {
  const Vector l = mec(Vector::Zero(2), square());
  EXPECT_LT((l.array() - 0.25).abs().maxCoeff(), 1e-12);
  const Matrix V = enumerate_vertices(regular_polygon(6));
  const VPolytope hex(V);
  const Vector lh = mec(hex.centroid(), hex);
  EXPECT_LT((lh.array() - 1.0 / 6.0).abs().maxCoeff(), 1e-10);
}

TEST(Mec, EntropyIsMaximalAmongFeasibleWeights) {
  const VPolytope P = square();
  const Vector v = (Vector(2) << 0.25, 0.0).finished();
  const Vector l = mec(v, P);
  EXPECT_LT((P.V() * l - v).lpNorm<Eigen::Infinity>(), 1e-8);
  EXPECT_NEAR(l.sum(), 1.0, 1e-12);
  Matrix sys(3, 4);
  sys << P.V(), Matrix::Ones(1, 4);
  const Matrix N = Eigen::FullPivLU<Matrix>(sys).kernel();
  RandomStream rng(1);
  int tested = 0;
  for (int i = 0; i < 1000; ++i) {
    const Vector lp = l + N * rng.normal_vector(N.cols()) * 0.1;
    if ((lp.array() <= 0.0).any()) continue;
    ++tested;
    EXPECT_GE(entropy(l), entropy(lp));
  }
  EXPECT_GT(tested, 500);
}

TEST(Mec, ConstraintResidualOnRandomPoints) {
  const VPolytope hex(enumerate_vertices(regular_polygon(6)));
  RandomStream rng(2);
  const Matrix X = interior_points(hex, 1000, rng);
  for (Index j = 0; j < X.cols(); ++j) {
    const Vector l = mec(X.col(j), hex);
    EXPECT_LT((mec_inverse(l, hex) - X.col(j)).lpNorm<Eigen::Infinity>(), 1e-8);
  }
}

TEST(Mec, OutsideAndBoundaryRejected) {
  EXPECT_THROW(mec((Vector(2) << 1.5, 0.0).finished(), square()), DomainError);
  EXPECT_THROW(mec((Vector(2) << 1.0, 0.0).finished(), square()), DomainError);
  EXPECT_THROW(mec_log((Vector(2) << 1.5, 0.0).finished(), square()), ConvergenceError);
  EXPECT_GT(interior_margin((Vector(2) << 0.999, 0.0).finished(), square()), 0.0);
  EXPECT_LT(interior_margin((Vector(2) << 1.0, 0.0).finished(), square()), 1e-12);
}

TEST(MecInverse, UniformWeightsAndPositivity) {
  EXPECT_LT(mec_inverse(Vector::Constant(4, 0.25), square()).norm(), 1e-15);
  EXPECT_THROW(mec_inverse(Vector::Unit(4, 0), square()), DomainError);
}

TEST(Helmert, OrthonormalRowsOrthogonalToOnes) {
  for (Index n : {2, 3, 7, 14}) {
    const Matrix H = helmert_basis(n);
    EXPECT_LT((H * H.transpose() - Matrix::Identity(n - 1, n - 1)).norm(), 1e-12);
    EXPECT_LT((H * Vector::Ones(n)).norm(), 1e-12);
  }
}

TEST(Ilr, UniformMapsToOrigin) {
  EXPECT_LT(ilr(Vector::Constant(5, 0.2), helmert_basis(5)).norm(), 1e-14);
}

TEST(Ilr, AitchisonIsometry) {
  RandomStream rng(3);
  const Matrix H = helmert_basis(6);
  for (int i = 0; i < 1000; ++i) {
    const Vector a = dirichlet(rng, 6), b = dirichlet(rng, 6);
    EXPECT_NEAR((ilr(a, H) - ilr(b, H)).norm(), (clr(a) - clr(b)).norm(), 1e-10);
  }
}

TEST(Ilr, DirichletRoundTrip) {
  RandomStream rng(4);
  const Matrix H = helmert_basis(5);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vector l = dirichlet(rng, 5);
    worst = std::max(worst, (ilr_inv(ilr(l, H), H) - l).lpNorm<Eigen::Infinity>());
    EXPECT_LT((ilr_log(l.array().log(), H) - ilr(l, H)).norm(), 1e-14);
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Ilr, VanishingPartRejected) {
  Vector l = Vector::Constant(3, 0.5);
  l(2) = 0.0;
  EXPECT_THROW(ilr(l, helmert_basis(3)), DomainError);
}

TEST(FitProjection, RecoversConstructedSubspace) {
  RandomStream rng(5);
  const Matrix Q = Eigen::HouseholderQR<Matrix>(Matrix::NullaryExpr(5, 5, [&] { return rng.normal(); }))
                       .householderQ();
  const Matrix A = Q.leftCols(2);
  const Vector c = rng.normal_vector(5);
  Matrix Z(5, 50);
  for (Index j = 0; j < 50; ++j) Z.col(j) = A * rng.normal_vector(2) + c;
  const IlrProjection p = fit_projection(Z, 2);
  EXPECT_LT((p.P * p.P.transpose() - Matrix::Identity(2, 2)).norm(), 1e-10);
  // Same subspace: P' P is the projector onto span(A).
  EXPECT_LT((p.P.transpose() * p.P - A * A.transpose()).norm(), 1e-10);
  for (Index j = 0; j < 50; ++j) EXPECT_LT((p.reconstruct(p.project(Z.col(j))) - Z.col(j)).norm(), 1e-10);
  EXPECT_TRUE((p.sigma.array() > 0.0).all());
}

TEST(FitProjection, RankErrors) {
  RandomStream rng(6);
  Matrix Z(4, 2);
  Z << rng.normal_vector(4), rng.normal_vector(4);
  EXPECT_THROW(fit_projection(Z, 2), DomainError);
  const Matrix full = Matrix::NullaryExpr(4, 30, [&] { return rng.normal(); });
  EXPECT_THROW(fit_projection(full, 2), DomainError);
}

TEST(FitProjection, ExampleModelHasGap) {
  const TransformChain chain = round_model(build_example_model());
  const VPolytope P(enumerate_vertices(chain.john));
  EXPECT_EQ(P.num_vertices(), 26);
  RandomStream rng(7);
  const AitchisonMap map = fit_aitchison_map(P, interior_points(P, 2000, rng));
  const Vector& sv = map.projection.singular_values;
  EXPECT_LT(sv(4) / sv(0), 1e-8);
  EXPECT_EQ(map.dim(), 4);
}

TEST(AitchisonMap, RoundTripAndSubspaceClosure) {
  const TransformChain chain = round_model(build_example_model());
  const VPolytope P(enumerate_vertices(chain.john));
  RandomStream rng(8);
  const AitchisonMap map = fit_aitchison_map(P, interior_points(P, 1000, rng));
  const Matrix X = interior_points(P, 1000, rng);
  for (Index j = 0; j < X.cols(); ++j) {
    EXPECT_LT((map.from_zt(map.to_zt(X.col(j))) - X.col(j)).lpNorm<Eigen::Infinity>(), 1e-7);
    const Vector z = ilr_log(mec_log(X.col(j), P), map.H);
    EXPECT_LT((map.projection.reconstruct(map.projection.project(z)) - z).lpNorm<Eigen::Infinity>(), 1e-6);
  }
}

TEST(AitchisonMap, CentroidAndOutsidePoint) {
  const VPolytope P = square();
  RandomStream rng(9);
  const AitchisonMap map = fit_aitchison_map(P, interior_points(P, 200, rng));
  const IlrProjection& pr = map.projection;
  const Vector expected = (pr.P * (-pr.zbar) - pr.mu).cwiseQuotient(pr.sigma);
  EXPECT_LT((map.to_zt(Vector::Zero(2)) - expected).norm(), 1e-10);
  EXPECT_THROW(map.to_zt(Vector::Constant(2, 2.0)), Error);
}

TEST(AitchisonMap, LogDetMatchesFiniteDifferences) {
  RandomStream rng(10);
  for (const VPolytope& P : {triangle(), square(), VPolytope(enumerate_vertices(regular_polygon(5)))}) {
    const AitchisonMap map = fit_aitchison_map(P, interior_points(P, 300, rng));
    int good = 0, total = 0;
    for (int i = 0; i < 200; ++i) {
      const Vector zt = rng.normal_vector(2);
      const Matrix fd = fd_jacobian([&](const Vector& z) { return map.from_zt(z); }, zt, 1e-6);
      ++total;
      if (std::abs(map.logdet_jvt(zt) - log_abs_det(fd)) < 1e-5) ++good;
      EXPECT_LT((map.jacobian_vt(zt) - fd).norm(), 1e-6 * std::max(1.0, fd.norm()));
    }
    EXPECT_GE(good, total * 99 / 100);
  }
}

TEST(AitchisonMap, PushforwardOfNormalIntegratesToOne) {
  // q(v) = N(z^t(v)) / |det dv/dz^t|, integrated by uniform sampling of the square.
  const VPolytope P = square();
  RandomStream rng(11);
  const AitchisonMap map = fit_aitchison_map(P, interior_points(P, 500, rng));
  const int n = 100000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vector v = (Vector(2) << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)).finished();
    const Vector zt = map.to_zt(v);
    acc += std::exp(-0.5 * zt.squaredNorm() - std::log(2.0 * kPi) - map.logdet_jvt(zt));
  }
  EXPECT_NEAR(4.0 * acc / n, 1.0, 0.02);
}
