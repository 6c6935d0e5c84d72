#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace polyflow;
using namespace polyflow::testing;

namespace {

/// Single affine layer psi(h, t) = M h.
MLP linear_field(const Matrix& M) {
  const Index K = M.rows();
  MLP net({K + 1, K}, RandomStream(0));
  net.weights()[0].setZero();
  net.weights()[0].leftCols(K) = M;
  net.biases()[0].setZero();
  return net;
}

Vector flatten(const MLP::Gradient& g) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.W.size(); ++l) {
    out.insert(out.end(), g.W[l].data(), g.W[l].data() + g.W[l].size());
    out.insert(out.end(), g.b[l].data(), g.b[l].data() + g.b[l].size());
  }
  return Eigen::Map<Vector>(out.data(), static_cast<Index>(out.size()));
}

Matrix random_matrix(Index r, Index c, RandomStream& rng) {
  return Matrix::NullaryExpr(r, c, [&] { return rng.normal(); });
}

TrainedFlow zero_flow(FlowKind kind, const HPolytope& H) {
  TrainedFlow f;
  f.kind = kind;
  f.polytope = H;
  f.net = MLP({H.dim() + 1, 8, H.dim()}, RandomStream(1), true);
  f.step_size = 0.1;
  return f;
}

}  // namespace

TEST(Mlp, ParameterGradientMatchesFiniteDifferences) {
  RandomStream rng(1);
  MLP net({3, 16, 16, 2}, rng.substream("init"));
  const Matrix X = random_matrix(3, 5, rng);
  const Matrix dY = random_matrix(2, 5, rng);
  MLP::Tape tape;
  net.forward(X, tape);
  const Vector g = flatten(net.backward(tape, dY));
  const Vector p = net.parameters();
  Vector fd(p.size());
  const double h = 1e-6;
  for (Index i = 0; i < p.size(); ++i) {
    Vector q = p;
    q(i) += h;
    net.set_parameters(q);
    const double up = (dY.array() * net.forward(X).array()).sum();
    q(i) -= 2.0 * h;
    net.set_parameters(q);
    const double dn = (dY.array() * net.forward(X).array()).sum();
    fd(i) = (up - dn) / (2.0 * h);
  }
  net.set_parameters(p);
  EXPECT_LT((g - fd).norm() / fd.norm(), 1e-4);
}

TEST(Mlp, JvpMatchesFiniteDifferences) {
  RandomStream rng(2);
  const MLP net({4, 32, 3}, rng.substream("init"));
  const Matrix X = random_matrix(4, 6, rng);
  const Matrix dX = random_matrix(4, 6, rng);
  MLP::Tape tape;
  net.forward(X, tape);
  const double h = 1e-6;
  const Matrix fd = (net.forward(X + h * dX) - net.forward(X - h * dX)) / (2.0 * h);
  EXPECT_LT((net.jvp(tape, dX) - fd).norm(), 1e-7 * std::max(1.0, fd.norm()));
}

TEST(Mlp, ZeroOutputAndParameterRoundTrip) {
  const MLP z({3, 8, 2}, RandomStream(3), true);
  EXPECT_EQ(z.forward(Matrix::Ones(3, 4)), Matrix::Zero(2, 4));
  MLP net({3, 8, 2}, RandomStream(4));
  EXPECT_EQ(net.num_parameters(), 3 * 8 + 8 + 8 * 2 + 2);
  const Vector p = net.parameters();
  net.set_parameters(p);
  EXPECT_EQ(net.parameters(), p);
  EXPECT_THROW(MLP({3}, RandomStream(0)), DimensionError);
}

TEST(Divergence, NegativeIdentityFieldIsMinusK) {
  for (Index K : {1, 2, 4, 7}) {
    const MLP net = linear_field(-Matrix::Identity(K, K));
    RandomStream rng(5);
    const Matrix Hb = random_matrix(K, 10, rng);
    const Vector div = divergence_exact(net, Hb, 0.3);
    for (Index j = 0; j < 10; ++j) EXPECT_EQ(div(j), -static_cast<double>(K));
    // Rademacher probes: z' (-I) z = -K for every probe.
    const Vector hd = divergence_hutchinson(net, Hb, 0.3, 3, rng);
    for (Index j = 0; j < 10; ++j) EXPECT_EQ(hd(j), -static_cast<double>(K));
  }
}

TEST(Divergence, RotationIsDivergenceFree) {
  Matrix R(2, 2);
  R << 0, -1, 1, 0;
  const Vector div = divergence_exact(linear_field(R), Matrix::Ones(2, 3), 0.0);
  EXPECT_EQ(div, Vector::Zero(3));
}

TEST(Divergence, ExactMatchesFiniteDifferenceTrace) {
  RandomStream rng(6);
  const MLP net({4, 24, 24, 3}, rng.substream("init"));
  const Matrix Hb = random_matrix(3, 8, rng);
  const double t = 0.4;
  const Vector div = divergence_exact(net, Hb, t);
  for (Index j = 0; j < Hb.cols(); ++j) {
    const Matrix J = fd_jacobian([&](const Vector& h) -> Vector { return velocity(net, h, t).col(0); }, Hb.col(j));
    EXPECT_NEAR(div(j), J.trace(), 1e-7);
  }
}

TEST(Divergence, HutchinsonWithinThreeStandardErrors) {
  RandomStream rng(7);
  const MLP net({5, 32, 4}, rng.substream("init"));
  const Vector h = rng.normal_vector(4);
  const double exact = divergence_exact(net, h, 0.7)(0);
  // One probe per column gives 1e4 independent single-probe estimates.
  const Index n = 10000;
  const Matrix Hb = h.replicate(1, n);
  const Vector est = divergence_hutchinson(net, Hb, 0.7, 1, rng);
  const double mean = est.mean();
  const double sd = std::sqrt((est.array() - mean).square().sum() / static_cast<double>(n - 1));
  const double se = sd / std::sqrt(static_cast<double>(n));
  EXPECT_GT(sd, 0.0);
  EXPECT_LT(std::abs(mean - exact), 3.0 * se);
}

TEST(Divergence, HutchinsonVarianceShrinksWithProbes) {
  RandomStream rng(8);
  const MLP net({4, 16, 3}, rng.substream("init"));
  const Matrix Hb = rng.normal_vector(3).replicate(1, 4000);
  auto var = [&](int probes) {
    const Vector e = divergence_hutchinson(net, Hb, 0.2, probes, rng);
    return (e.array() - e.mean()).square().mean();
  };
  const double v1 = var(1), v16 = var(16);
  EXPECT_NEAR(v1 / v16, 16.0, 3.0);
  EXPECT_THROW(DivergenceMode::hutchinson(0), DimensionError);
}

TEST(Integrate, LinearDecayMatchesExponential) {
  const MLP net = linear_field(-Matrix::Identity(3, 3));
  const Matrix h0 = Matrix::Ones(3, 2);
  const IntegrationResult r = integrate(net, h0, ManifoldSpec{}, 0.05, 0.0, 1.0, true);
  EXPECT_LT((r.states - std::exp(-1.0) * h0).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_NEAR(r.div_integral(0), -3.0, 1e-12);
  // Reverse direction recovers the start.
  const IntegrationResult back = integrate(net, r.states, ManifoldSpec{}, 0.05, 1.0, 0.0, true);
  EXPECT_LT((back.states - h0).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_NEAR(back.div_integral(0), -3.0, 1e-12);
}

TEST(Integrate, MidpointIsSecondOrder) {
  Matrix M(2, 2);
  M << -0.5, -2.0, 2.0, -0.5;  // spiral: exp(M) has a closed form
  const MLP net = linear_field(M);
  const Vector h0 = (Vector(2) << 1.0, 0.5).finished();
  Matrix R(2, 2);
  R << std::cos(2.0), -std::sin(2.0), std::sin(2.0), std::cos(2.0);
  const Vector exact = std::exp(-0.5) * R * h0;
  std::vector<double> err;
  for (double step : {0.1, 0.05, 0.025, 0.0125})
    err.push_back((integrate(net, h0, ManifoldSpec{}, step, 0.0, 1.0).states.col(0) - exact).norm());
  for (std::size_t i = 1; i < err.size(); ++i) {
    const double order = std::log2(err[i - 1] / err[i]);
    EXPECT_NEAR(order, 2.0, 0.1) << "step " << i;
  }
}

TEST(Integrate, BallProjectionKeepsNormBounded) {
  const MLP net = linear_field(5.0 * Matrix::Identity(2, 2));
  ManifoldSpec ball;
  ball.kind = ManifoldKind::UnitBall;
  RandomStream rng(9);
  Matrix h0(2, 50);
  for (Index j = 0; j < 50; ++j) h0.col(j) = random_in_ball(rng, 2);
  const IntegrationResult r = integrate(net, h0, ball, 0.05, 0.0, 1.0);
  for (Index j = 0; j < 50; ++j) EXPECT_LE(r.states.col(j).norm(), 1.0 + 1e-15);
  EXPECT_THROW(integrate(net, h0, ball, 0.0, 0.0, 1.0), DimensionError);
}

TEST(Integrate, PolytopeProjectionKeepsStatesInside) {
  const MLP net = linear_field(3.0 * Matrix::Identity(2, 2));
  ManifoldSpec m;
  m.kind = ManifoldKind::EuclideanPolytope;
  m.polytope = cube(2);
  const IntegrationResult r = integrate(net, Matrix::Constant(2, 3, 0.5), m, 0.1, 0.0, 1.0);
  for (Index j = 0; j < 3; ++j) EXPECT_TRUE(cube(2).contains(r.states.col(j), 1e-9));
}

TEST(Projection, PolytopeSatisfiesVariationalInequality) {
  // x* = P(y) iff <y - x*, z - x*> <= 0 for every feasible z.
  RandomStream rng(10);
  const HPolytope H = random_polytope(3, 6, rng);
  for (int i = 0; i < 20; ++i) {
    const Vector y = 4.0 * rng.normal_vector(3);
    const Vector x = project_polytope(y, H);
    EXPECT_TRUE(H.contains(x, 1e-8));
    for (int k = 0; k < 50; ++k) EXPECT_LE((y - x).dot(rejection_point(H, 2.0, rng) - x), 1e-6);
  }
  const Vector y = (Vector(2) << 2.0, 0.5).finished();
  EXPECT_LT((project_polytope(y, cube(2)) - (Vector(2) << 1.0, 0.5).finished()).norm(), 1e-9);
}

TEST(Projection, Simplex) {
  const Vector p = project_simplex((Vector(3) << 0.5, 0.5, 0.5).finished());
  EXPECT_LT((p.array() - 1.0 / 3.0).abs().maxCoeff(), 1e-15);
  const Vector q = project_simplex((Vector(3) << 2.0, 0.0, -1.0).finished());
  EXPECT_LT((q - Vector::Unit(3, 0)).norm(), 1e-15);
  RandomStream rng(11);
  for (int i = 0; i < 50; ++i) {
    const Vector y = rng.normal_vector(5);
    const Vector x = project_simplex(y);
    EXPECT_NEAR(x.sum(), 1.0, 1e-12);
    EXPECT_GE(x.minCoeff(), 0.0);
    for (int k = 0; k < 20; ++k) {
      Vector z = rng.normal_vector(5).cwiseAbs();
      z /= z.sum();
      EXPECT_LE((y - x).dot(z - x), 1e-12);
    }
  }
}

TEST(Projection, VPolytopeMatchesHPolytope) {
  const VPolytope sq(enumerate_vertices(cube(2)));
  RandomStream rng(12);
  for (int i = 0; i < 20; ++i) {
    const Vector y = 3.0 * rng.normal_vector(2);
    EXPECT_LT((project_polytope(y, sq) - project_polytope(y, cube(2))).norm(), 1e-6);
  }
}

TEST(FlowMatching, InterpolantEndpointsAndTarget) {
  RandomStream rng(13);
  const Matrix h0 = random_matrix(3, 4, rng), h1 = random_matrix(3, 4, rng);
  const Vector t = (Vector(4) << 0.0, 1.0, 0.5, 0.25).finished();
  const Interpolant ip = geodesic_interpolant(h0, h1, t);
  EXPECT_EQ(ip.ht.col(0), h0.col(0));
  EXPECT_EQ(ip.ht.col(1), h1.col(1));
  EXPECT_LT((ip.ht.col(2) - 0.5 * (h0.col(2) + h1.col(2))).norm(), 1e-15);
  EXPECT_EQ(ip.target, h1 - h0);
}

TEST(FlowMatching, LossGradientMatchesFiniteDifferences) {
  RandomStream rng(14);
  MLP net({3, 12, 2}, rng.substream("init"));
  const Matrix h0 = random_matrix(2, 7, rng), h1 = random_matrix(2, 7, rng);
  Vector t(7);
  for (Index j = 0; j < 7; ++j) t(j) = rng.uniform();
  MLP::Gradient g;
  const double loss = rcfm_loss(net, h0, h1, t, &g);
  // Perfect field for a single pair would give zero; here just check positivity.
  EXPECT_GT(loss, 0.0);
  const Vector grad = flatten(g);
  const Vector p = net.parameters();
  Vector fd(p.size());
  for (Index i = 0; i < p.size(); ++i) {
    Vector q = p;
    q(i) += 1e-6;
    net.set_parameters(q);
    const double up = rcfm_loss(net, h0, h1, t);
    q(i) -= 2e-6;
    net.set_parameters(q);
    fd(i) = (up - rcfm_loss(net, h0, h1, t)) / 2e-6;
  }
  EXPECT_LT((grad - fd).norm() / fd.norm(), 1e-4);
}

TEST(FlowMatching, TrainingReducesLoss) {
  RandomStream rng(15);
  const HPolytope H = cube(2);
  Matrix V(2, 2048);
  for (Index j = 0; j < V.cols(); ++j) {
    Vector v;
    do v = (Vector(2) << 0.5, 0.0).finished() + 0.2 * rng.normal_vector(2);
    while (!H.strictly_contains(v));
    V.col(j) = v;
  }
  TrainConfig cfg;
  cfg.hidden = {32, 32};
  cfg.epochs = 15;
  cfg.batch_size = 256;
  cfg.lr = 3e-3;
  cfg.seed = 2;
  const TrainedFlow flow = train_flow(FlowKind::Ball, H, V, cfg);
  ASSERT_EQ(flow.loss_history.size(), 15u);
  EXPECT_LT(flow.loss_history.back(), 0.8 * flow.loss_history.front());
  // Same seed, same network.
  EXPECT_EQ(train_flow(FlowKind::Ball, H, V, cfg).net.parameters(), flow.net.parameters());
}

TEST(FlowDensity, ZeroFieldBallFlowIsBallPushforward) {
  const HPolytope H = cube(2);
  const TrainedFlow flow = zero_flow(FlowKind::Ball, H);
  RandomStream rng(16);
  Matrix V(2, 200);
  for (Index j = 0; j < V.cols(); ++j) V.col(j) = rejection_point(H, 1.0, rng);
  const Vector lq = log_density(flow, V);
  for (Index j = 0; j < V.cols(); ++j) {
    const double expected = -std::log(kPi) - jacobian_ball(to_ball(V.col(j), H), H).log_det;
    EXPECT_NEAR(lq(j), expected, 1e-10);
  }
  // Normalization over the square by uniform sampling.
  const Index n = 100000;
  Matrix U(2, n);
  for (Index j = 0; j < n; ++j) U.col(j) = rejection_point(H, 1.0, rng);
  EXPECT_NEAR(4.0 * log_density(flow, U).array().exp().mean(), 1.0, 0.02);
}

TEST(FlowDensity, ForwardAndReverseLogDensitiesAgree) {
  const HPolytope H = cube(2);
  TrainedFlow flow = zero_flow(FlowKind::Ball, H);
  flow.net = MLP({3, 16, 2}, RandomStream(17));
  flow.net.weights().back() *= 0.3;
  flow.step_size = 0.01;
  RandomStream rng(18);
  const FlowSamples s = sample_with_log_density(flow, 200, rng);
  // Samples pushed onto the sphere sit on the boundary; compare the rest.
  std::vector<Index> interior;
  for (Index j = 0; j < 200; ++j) {
    EXPECT_TRUE(s.inside[static_cast<std::size_t>(j)]);
    if (H.strictly_contains(s.v.col(j))) interior.push_back(j);
  }
  ASSERT_GE(interior.size(), 100u);
  Matrix Vi(2, static_cast<Index>(interior.size()));
  for (std::size_t k = 0; k < interior.size(); ++k) Vi.col(static_cast<Index>(k)) = s.v.col(interior[k]);
  const Vector lq = log_density(flow, Vi);
  std::size_t close = 0;
  for (std::size_t k = 0; k < interior.size(); ++k)
    if (std::abs(lq(static_cast<Index>(k)) - s.logq(interior[k])) < 1e-3) ++close;
  EXPECT_GE(close, interior.size() * 95 / 100);
}

TEST(FlowDensity, EuclideanOutsideIsMinusInfinity) {
  TrainedFlow flow = zero_flow(FlowKind::Euclidean, cube(2));
  flow.log_volume = std::log(4.0);
  Matrix V(2, 2);
  V << 0.5, 2.0, 0.0, 0.0;
  const Vector lq = log_density(flow, V);
  EXPECT_NEAR(lq(0), -std::log(4.0), 1e-12);
  EXPECT_EQ(lq(1), -kInf);
  const TrainedFlow ball = zero_flow(FlowKind::Ball, cube(2));
  EXPECT_THROW(log_density(ball, V), DomainError);
}

TEST(FlowDensity, EmptyRequests) {
  const TrainedFlow flow = zero_flow(FlowKind::Ball, cube(3));
  RandomStream rng(19);
  EXPECT_EQ(sample(flow, 0, rng).cols(), 0);
  EXPECT_EQ(sample_with_log_density(flow, 0, rng).v.cols(), 0);
  EXPECT_EQ(log_density(flow, Matrix(3, 0)).size(), 0);
}

TEST(FlowDensity, ZeroFieldBallSamplesAreUniformInBallCoordinates) {
  // With psi = 0 the flow is the identity in ball coordinates; the radial
  // CDF of a uniform 2-ball is r^2.
  const HPolytope H = cube(2);
  const TrainedFlow flow = zero_flow(FlowKind::Ball, H);
  RandomStream rng(20);
  const Matrix V = sample(flow, 20000, rng);
  const Matrix B = to_ball_batch(V, H);
  std::vector<double> r(static_cast<std::size_t>(B.cols()));
  for (Index j = 0; j < B.cols(); ++j) r[static_cast<std::size_t>(j)] = B.col(j).norm();
  std::sort(r.begin(), r.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i)
    ks = std::max(ks, std::abs(r[i] * r[i] - static_cast<double>(i + 1) / static_cast<double>(r.size())));
  EXPECT_LT(ks, 0.015);
}

TEST(FlowKindNames, ParseAndPrint) {
  EXPECT_EQ(parse_flow_kind("ball"), FlowKind::Ball);
  EXPECT_EQ(parse_flow_kind(to_string(FlowKind::Aitchison)), FlowKind::Aitchison);
  EXPECT_THROW(parse_flow_kind("sphere"), DomainError);
}
