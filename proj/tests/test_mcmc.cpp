#include "test_util.hpp"

#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>

using namespace polyflow;
using namespace polyflow::testing;

namespace {

ChainMatrix pseudo_chains(Index chains, Index n, const std::function<double(RandomStream&, double)>& step,
                          std::uint64_t seed) {
  ChainMatrix out(chains, n);
  RandomStream rng(seed);
  for (Index c = 0; c < chains; ++c) {
    double x = rng.normal();
    for (Index i = 0; i < n; ++i) {
      x = step(rng, x);
      out(c, i) = x;
    }
  }
  return out;
}

double ks_uniform(std::vector<double> x, double lo, double hi) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double F = (x[i] - lo) / (hi - lo);
    d = std::max({d, std::abs(F - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - F)});
  }
  return d;
}

}  // namespace

TEST(ChordExtremes, CubeExamples) {
  const ChordInterval a = chord_extremes(Vector::Zero(2), Vector::Unit(2, 0), cube(2));
  EXPECT_DOUBLE_EQ(a.lo, -1.0);
  EXPECT_DOUBLE_EQ(a.hi, 1.0);
  const ChordInterval b = chord_extremes((Vector(2) << 0.5, 0).finished(), Vector::Unit(2, 0), cube(2));
  EXPECT_DOUBLE_EQ(b.lo, -1.5);
  EXPECT_DOUBLE_EQ(b.hi, 0.5);
}

TEST(ChordExtremes, EndpointsAreBoundaryTight) {
  RandomStream rng(1);
  const HPolytope H = random_polytope(5, 10, rng);
  for (int i = 0; i < 1000; ++i) {
    const Vector v = rejection_point(H, 2.0, rng);
    const Vector s = random_direction(rng, 5);
    const ChordInterval c = chord_extremes(v, s, H);
    for (double a : {c.lo, c.hi}) {
      const Vector slack = H.b() - H.A() * (v + a * s);
      EXPECT_GE(slack.minCoeff(), -1e-12);
      EXPECT_LT(slack.minCoeff(), 1e-12);
    }
  }
}

TEST(ChordExtremes, InfeasiblePointThrows) {
  EXPECT_THROW(chord_extremes(Vector::Constant(2, 1.5), Vector::Unit(2, 0), cube(2)), DomainError);
}

TEST(Propose, UniformMoments) {
  RandomStream rng(2);
  const Vector a = propose({-1.0, 1.0}, 100000, ProposalDist::uniform(), Vector::Unit(1, 0), rng);
  EXPECT_NEAR(a.mean(), 0.0, 0.01);
  EXPECT_NEAR((a.array() - a.mean()).square().mean(), 1.0 / 3.0, 0.01);
  EXPECT_GT(a.minCoeff(), -1.0);
  EXPECT_LT(a.maxCoeff(), 1.0);
}

TEST(Propose, WideTruncatedNormalIsNearlyUniform) {
  RandomStream rng(3);
  const double width = 2.0;
  const ProposalDist tn = ProposalDist::truncated_normal(Matrix::Identity(2, 2) * std::pow(1e3 * width, 2));
  const Vector a = propose({-0.5, 1.5}, 100000, tn, Vector::Unit(2, 0), rng);
  EXPECT_LT(ks_uniform(std::vector<double>(a.data(), a.data() + a.size()), -0.5, 1.5), 0.01);
}

TEST(Propose, NarrowTruncatedNormalMatchesMoments) {
  // sigma small relative to the chord: truncation is negligible.
  RandomStream rng(4);
  const ProposalDist tn = ProposalDist::truncated_normal(Matrix::Identity(1, 1) * 0.01);
  const Vector a = propose({-5.0, 5.0}, 100000, tn, Vector::Unit(1, 0), rng);
  EXPECT_NEAR(a.mean(), 0.0, 0.003);
  EXPECT_NEAR((a.array() - a.mean()).square().mean(), 0.01, 3e-4);
}

TEST(Propose, TailTruncationStaysInside) {
  RandomStream rng(5);
  const ProposalDist tn = ProposalDist::truncated_normal(Matrix::Identity(1, 1) * 1e-4);
  const Vector a = propose({0.5, 0.6}, 10000, tn, Vector::Unit(1, 0), rng);
  EXPECT_GE(a.minCoeff(), 0.5);
  EXPECT_LE(a.maxCoeff(), 0.6);
  // E[X | X > 50] = 50 + 1/50 - 2/50^3 + ... in units of sigma = 0.01.
  EXPECT_NEAR(a.mean(), 0.5 + 0.01 * (1.0 / 50.0 - 2.0 / 125000.0), 1e-5);
}

TEST(Propose, LogNormalCdfIsContinuousAtSeriesSwitch) {
  const double below = detail::log_normal_cdf(-20.0 - 1e-9);
  const double above = detail::log_normal_cdf(-20.0 + 1e-9);
  EXPECT_NEAR(below, above, 1e-7);
  EXPECT_NEAR(detail::log_normal_mass(50.0, 60.0), detail::log_normal_cdf(-50.0), 1e-12);
}

TEST(Propose, SingleDrawAndDegenerateChord) {
  RandomStream rng(6);
  const Vector a = propose({-0.2, 0.7}, 1, ProposalDist::uniform(), Vector::Unit(1, 0), rng);
  ASSERT_EQ(a.size(), 1);
  EXPECT_GT(a(0), -0.2);
  EXPECT_LT(a(0), 0.7);
  EXPECT_THROW(propose({0.0, 1e-15}, 1, ProposalDist::uniform(), Vector::Unit(1, 0), rng), DomainError);
}

TEST(ProposalDist, RejectsIndefiniteSigma) {
  EXPECT_THROW(ProposalDist::truncated_normal(-Matrix::Identity(2, 2)), DomainError);
}

TEST(TransitionWeights, PeskunWithOneProposalIsMetropolisHastings) {
  const Vector alphas = Vector::Constant(1, 0.3);
  const Vector down = transition_weights((Vector(2) << 0.0, std::log(0.3)).finished(), alphas,
                                         ProposalDist::uniform(), KernelKind::Peskun);
  EXPECT_NEAR(down(1), 0.3, 1e-15);
  EXPECT_NEAR(down(0), 0.7, 1e-15);
  const Vector up = transition_weights((Vector(2) << 0.0, std::log(2.0)).finished(), alphas, ProposalDist::uniform(),
                                       KernelKind::Peskun);
  EXPECT_EQ(up(1), 1.0);
  EXPECT_EQ(up(0), 0.0);
}

TEST(TransitionWeights, EqualDensities) {
  const Vector logpi = Vector::Constant(4, -1.7);
  const Vector alphas = (Vector(3) << -0.1, 0.2, 0.5).finished();
  const Vector p = transition_weights(logpi, alphas, ProposalDist::uniform(), KernelKind::Peskun);
  for (Index i = 1; i <= 3; ++i) EXPECT_NEAR(p(i), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p(0), 0.0, 1e-15);
  const Vector b = transition_weights(logpi, alphas, ProposalDist::uniform(), KernelKind::Barker);
  for (Index i = 0; i <= 3; ++i) EXPECT_NEAR(b(i), 0.25, 1e-15);
}

TEST(TransitionWeights, BarkerMatchesLinearSpaceOracle) {
  // q(a_j | a_i): normal density centred at a_i, truncated to the chord.
  const boost::math::normal_distribution<double> nd;
  RandomStream rng(7);
  const ChordInterval chord{-1.2, 0.9};
  const double sigma = 0.4;
  const ProposalDist tn = ProposalDist::truncated_normal(Matrix::Identity(1, 1) * sigma * sigma);
  for (int trial = 0; trial < 50; ++trial) {
    const Index M = 1 + trial % 4;
    Vector alphas(M), logpi(M + 1), a(M + 1);
    for (Index i = 0; i < M; ++i) alphas(i) = rng.uniform(chord.lo, chord.hi);
    for (Index i = 0; i <= M; ++i) logpi(i) = rng.uniform(-2.0, 2.0);
    a << 0.0, alphas;
    Vector lin(M + 1);
    for (Index i = 0; i <= M; ++i) {
      const double mass = boost::math::cdf(nd, (chord.hi - a(i)) / sigma) - boost::math::cdf(nd, (chord.lo - a(i)) / sigma);
      double prod = std::exp(logpi(i));
      for (Index j = 0; j <= M; ++j)
        if (j != i) prod *= boost::math::pdf(nd, (a(j) - a(i)) / sigma) / sigma / mass;
      lin(i) = prod;
    }
    lin /= lin.sum();
    const Vector w = transition_weights(logpi, alphas, tn, KernelKind::Barker, chord, sigma);
    EXPECT_LT((w - lin).lpNorm<Eigen::Infinity>(), 1e-12);
  }
}

TEST(TransitionWeights, AlwaysAProbabilityVector) {
  RandomStream rng(8);
  const ChordInterval chord{-1.0, 2.0};
  const ProposalDist tn = ProposalDist::truncated_normal(Matrix::Identity(1, 1) * 0.3);
  for (int trial = 0; trial < 200; ++trial) {
    const Index M = 1 + trial % 6;
    Vector alphas(M), logpi(M + 1);
    for (Index i = 0; i < M; ++i) alphas(i) = rng.uniform(chord.lo, chord.hi);
    for (Index i = 0; i <= M; ++i) logpi(i) = rng.uniform(-500.0, 500.0);
    for (KernelKind k : {KernelKind::Peskun, KernelKind::Barker}) {
      const Vector w = transition_weights(logpi, alphas, tn, k, chord, std::sqrt(0.3));
      EXPECT_NEAR(w.sum(), 1.0, 1e-12);
      EXPECT_GE(w.minCoeff(), 0.0);
      const Vector u = transition_weights(logpi, alphas, ProposalDist::uniform(), k);
      EXPECT_NEAR(u.sum(), 1.0, 1e-12);
      EXPECT_GE(u.minCoeff(), 0.0);
    }
  }
  EXPECT_THROW(transition_weights(Vector::Constant(2, -kInf), Vector::Zero(1), ProposalDist::uniform(),
                                  KernelKind::Peskun),
               NumericalError);
}

TEST(SelectCandidate, OrderAndCurrentState) {
  const Vector w = (Vector(3) << 0.5, 0.2, 0.3).finished();
  EXPECT_EQ(select_candidate(w, 0.1), 1);
  EXPECT_EQ(select_candidate(w, 0.4), 2);
  EXPECT_EQ(select_candidate(w, 0.6), 0);
}

TEST(HitAndRun, PeskunOneProposalReproducesMetropolisHastings) {
  const HPolytope H = cube(3);
  const LogDensity logpdf = [](const Vector& v) { return -2.0 * v.squaredNorm() + v(0); };
  SamplerConfig cfg;
  cfg.M = 1;
  cfg.kernel = KernelKind::Peskun;
  ChainState state{Vector::Zero(3), RandomStream(99)};
  double lp = logpdf(state.current);

  // Plain Metropolis-Hastings driven by an identical stream.
  RandomStream rng(99);
  Vector x = Vector::Zero(3);
  double lx = logpdf(x);
  for (int step = 0; step < 5000; ++step) {
    const Vector s = random_direction(rng, 3);
    const ChordInterval c = chord_extremes(x, s, H);
    const double a = c.lo + (c.hi - c.lo) * rng.uniform_open();
    const Vector y = x + a * s;
    const double ly = H.strictly_contains(y, 0.0) ? logpdf(y) : -kInf;
    if (rng.uniform() < std::min(1.0, std::exp(ly - lx))) {
      x = y;
      lx = ly;
    }
    hit_and_run_step(state, H, logpdf, lp, cfg);
    ASSERT_EQ(state.current, x) << "diverged at step " << step;
  }
}

TEST(HitAndRun, UniformCubeMoments) {
  SamplerConfig cfg;
  cfg.n_chains = 4;
  cfg.n_samples = 3000;
  cfg.burn_in = 500;
  cfg.thin = 5;
  cfg.seed = 10;
  const SamplerResult res = run_chains(cube(4), [](const Vector&) { return 0.0; }, cfg);
  const Matrix X = res.samples();
  ASSERT_EQ(X.cols(), 12000);
  for (Index k = 0; k < 4; ++k) {
    const Vector row = X.row(k).transpose();
    EXPECT_NEAR(row.mean(), 0.0, 0.02);
    EXPECT_NEAR((row.array() - row.mean()).square().mean(), 1.0 / 3.0, 0.015);
    EXPECT_LT(res.diagnostics.rhat[static_cast<std::size_t>(k)], 1.01);
  }
}

TEST(HitAndRun, DrawsAreStrictlyFeasible) {
  RandomStream rng(11);
  const HPolytope H = random_polytope(4, 10, rng);
  SamplerConfig cfg;
  cfg.M = 3;
  cfg.n_chains = 2;
  cfg.n_samples = 2000;
  cfg.burn_in = 0;
  cfg.thin = 1;
  cfg.seed = 12;
  const SamplerResult res = run_chains(H, [](const Vector& v) { return -v.squaredNorm(); }, cfg);
  const Matrix X = res.samples();
  EXPECT_GT(((-(H.A() * X)).colwise() + H.b()).minCoeff(), 0.0);
}

TEST(HitAndRun, ParallelAndSerialAgree) {
  SamplerConfig cfg;
  cfg.M = 3;
  cfg.n_chains = 3;
  cfg.n_samples = 200;
  cfg.burn_in = 50;
  cfg.thin = 2;
  cfg.seed = 13;
  cfg.proposal = ProposalDist::truncated_normal(Matrix::Identity(2, 2) * 0.2);
  const LogDensity logpdf = [](const Vector& v) { return -v.squaredNorm(); };
  const SamplerResult a = run_chains(cube(2), logpdf, cfg);
  cfg.parallel = false;
  const SamplerResult b = run_chains(cube(2), logpdf, cfg);
  EXPECT_EQ(a.samples(), b.samples());
  cfg.seed = 14;
  EXPECT_NE(run_chains(cube(2), logpdf, cfg).samples(), b.samples());
}

TEST(HitAndRun, NonFiniteTargetRaises) {
  SamplerConfig cfg;
  cfg.n_chains = 1;
  cfg.n_samples = 10;
  cfg.seed = 15;
  EXPECT_THROW(run_chains(cube(2), [](const Vector& v) { return v(0) > 0.5 ? std::nan("") : 0.0; }, cfg),
               NumericalError);
}

TEST(HitAndRun, StepTargetAcceptanceMatchesAnalytic) {
  // Density 1 on [-1, 0), 0.5 on [0, 1]: MH acceptance with a uniform chord proposal is 5/6.
  Matrix A(2, 1);
  A << 1, -1;
  const HPolytope H(A, Vector::Ones(2));
  const LogDensity logpdf = [](const Vector& v) { return v(0) < 0.0 ? 0.0 : std::log(0.5); };
  SamplerConfig cfg;
  cfg.M = 1;
  cfg.n_chains = 20;
  cfg.n_samples = 20000;
  cfg.burn_in = 0;
  cfg.thin = 1;
  cfg.seed = 16;
  const SamplerResult res = run_chains(H, logpdf, cfg);
  const Eigen::Map<const Vector> acc(res.acceptance.data(), static_cast<Index>(res.acceptance.size()));
  const double mean = acc.mean();
  const double se = std::sqrt((acc.array() - mean).square().sum() / (acc.size() - 1) / acc.size());
  EXPECT_LT(std::abs(mean - 5.0 / 6.0), 3.0 * se + 1e-12) << "mean " << mean << " se " << se;
}

TEST(Diagnostics, IidChains) {
  const ChainMatrix c = pseudo_chains(4, 2000, [](RandomStream& r, double) { return r.normal(); }, 17);
  const double R = rhat(c);
  EXPECT_GE(R, 0.999);
  EXPECT_LE(R, 1.005);
  EXPECT_GE(ess_percent(c), 80.0);
}

TEST(Diagnostics, DivergingChains) {
  ChainMatrix c = pseudo_chains(2, 1000, [](RandomStream& r, double) { return r.normal(); }, 18);
  c.row(1).array() += 5.0;
  EXPECT_GT(rhat(c), 1.1);
}

TEST(Diagnostics, Ar1Ess) {
  const double rho = 0.5;
  const ChainMatrix c = pseudo_chains(
      4, 20000, [rho](RandomStream& r, double x) { return rho * x + std::sqrt(1.0 - rho * rho) * r.normal(); }, 19);
  EXPECT_NEAR(ess_percent(c), 100.0 * (1.0 - rho) / (1.0 + rho), 5.0);
}

TEST(Diagnostics, ConstantChainIsAnError) {
  const ChainMatrix c = ChainMatrix::Constant(2, 100, 3.0);
  EXPECT_THROW(rhat(c), NumericalError);
  EXPECT_THROW(ess(c), NumericalError);
  EXPECT_THROW(rhat(ChainMatrix::Zero(2, 2)), DimensionError);
}

TEST(Diagnostics, DiagnosePerDimension) {
  RandomStream rng(20);
  std::vector<Matrix> chains;
  for (int c = 0; c < 3; ++c) {
    Matrix m(2, 500);
    for (Index j = 0; j < 500; ++j) m.col(j) = rng.normal_vector(2);
    chains.push_back(m);
  }
  const ChainDiagnostics d = diagnose(chains);
  ASSERT_EQ(d.rhat.size(), 2u);
  for (double e : d.ess_pct) {
    EXPECT_GT(e, 0.0);
    EXPECT_LE(e, 100.0);
  }
}
