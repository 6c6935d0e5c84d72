// Multiple-proposal hit-and-run over densities supported on a polytope.
// Each step draws one direction, M points on the chord through the current
// state, and picks the next state among the M+1 candidates with Peskun or
// Barker weights.

#ifndef POLYFLOW_MCMC_HPP
#define POLYFLOW_MCMC_HPP

#include "polyflow/diagnostics.hpp"
#include "polyflow/polytope.hpp"
#include "polyflow/random.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <exception>
#include <functional>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

namespace polyflow {

struct ChordInterval {
  double lo = 0.0;  // <= 0
  double hi = 0.0;  // >= 0
};

/// v + alpha s stays in H exactly for alpha in [lo, hi].
inline ChordInterval chord_extremes(const Eigen::Ref<const Vector>& v, const Eigen::Ref<const Vector>& s,
                                    const HPolytope& H) {
  require(v.size() == H.dim() && s.size() == H.dim(), "chord_extremes: wrong dimension");
  const Vector ds = H.A() * s;
  const Vector dv = H.b() - H.A() * v;
  if (dv.minCoeff() < 0.0) throw DomainError("chord_extremes: point is outside the polytope");
  ChordInterval out{-kInf, kInf};
  for (Index i = 0; i < H.rows(); ++i) {
    if (ds(i) > 0.0)
      out.hi = std::min(out.hi, dv(i) / ds(i));
    else if (ds(i) < 0.0)
      out.lo = std::max(out.lo, dv(i) / ds(i));
  }
  if (!std::isfinite(out.lo) || !std::isfinite(out.hi)) throw UnboundedError("chord_extremes: chord is unbounded");
  return out;
}

enum class ProposalKind { Uniform, TruncatedNormal };
enum class KernelKind { Peskun, Barker };

inline const char* to_string(ProposalKind k) { return k == ProposalKind::Uniform ? "uniform" : "truncated_normal"; }
inline const char* to_string(KernelKind k) { return k == KernelKind::Peskun ? "peskun" : "barker"; }

struct ProposalDist {
  ProposalKind kind = ProposalKind::Uniform;
  Matrix Sigma;  // TruncatedNormal: variance along s is s' Sigma s

  static ProposalDist uniform() { return {}; }
  static ProposalDist truncated_normal(Matrix Sigma) {
    Eigen::LLT<Matrix> llt(Sigma);
    if (llt.info() != Eigen::Success || !Sigma.isApprox(Sigma.transpose()))
      throw DomainError("ProposalDist: Sigma must be symmetric positive definite");
    return {ProposalKind::TruncatedNormal, std::move(Sigma)};
  }

  double sigma_along(const Eigen::Ref<const Vector>& s) const {
    const double var = s.dot(Sigma * s);
    if (!(var > 0.0)) throw DomainError("ProposalDist: non-positive variance along the chord");
    return std::sqrt(var);
  }
};

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// log Phi(x); asymptotic series below -20 where erfc underflows.
inline double log_normal_cdf(double x) {
  if (x > -20.0) return x > 0.0 ? std::log1p(-normal_cdf(-x)) : std::log(normal_cdf(x));
  const double z = 1.0 / (x * x);
  double term = 1.0, series = 1.0;
  for (int k = 1; k <= 8; ++k) {
    term *= -static_cast<double>(2 * k - 1) * z;
    series += term;
  }
  return -0.5 * x * x - std::log(-x) - 0.5 * std::log(2.0 * kPi) + std::log(series);
}

/// log(Phi(b) - Phi(a)) for a < b, accurate in both tails.
inline double log_normal_mass(double a, double b) {
  if (a > 0.0) return log_normal_mass(-b, -a);
  const double pa = normal_cdf(a);
  const double pb = normal_cdf(b);
  if (pb > 1e-280) return std::log(pb - pa);
  const double la = log_normal_cdf(a);
  const double lb = log_normal_cdf(b);
  return lb + std::log1p(-std::exp(la - lb));
}

/// Inverse-CDF draw from N(0, 1) truncated to [a, b].
inline double truncated_normal_draw(double a, double b, double u) {
  static const boost::math::normal_distribution<double> std_normal;
  if (a > 0.0) return -truncated_normal_draw(-b, -a, 1.0 - u);
  const double pa = normal_cdf(a);
  const double pb = normal_cdf(b);
  double x;
  if (pb <= 1e-280) {
    // Deep lower tail: solve log Phi(x) = log(Phi(a) + u (Phi(b) - Phi(a))) by
    // Newton from b; log Phi is concave, so the iterates approach from the left.
    const double la = log_normal_cdf(a);
    const double lb = log_normal_cdf(b);
    const double target = lb + std::log(u + (1.0 - u) * std::exp(la - lb));
    x = b;
    for (int it = 0; it < 100; ++it) {
      const double g = log_normal_cdf(x) - target;
      const double slope = std::exp(-0.5 * x * x - 0.5 * std::log(2.0 * kPi) - log_normal_cdf(x));
      const double next = std::clamp(x - g / slope, a, b);
      if (std::abs(next - x) <= 1e-14 * std::abs(x)) {
        x = next;
        break;
      }
      x = next;
    }
    return x;
  }
  const double p = pa + u * (pb - pa);
  if (p < 0.5) {
    x = p > 0.0 ? boost::math::quantile(std_normal, p) : a;
  } else {
    // Upper half: work with the complement for accuracy.
    const double qa = normal_cdf(-a);
    const double qb = normal_cdf(-b);
    const double q = qb + (1.0 - u) * (qa - qb);
    x = q > 0.0 ? boost::math::quantile(boost::math::complement(std_normal, q)) : b;
  }
  return std::clamp(x, a, b);
}

}  // namespace detail

/// M draws on the chord [chord.lo, chord.hi], centred on the current state.
inline Vector propose(const ChordInterval& chord, Index M, const ProposalDist& dist,
                      const Eigen::Ref<const Vector>& s, RandomStream& rng) {
  if (!(chord.hi - chord.lo >= 1e-14)) throw DomainError("propose: degenerate chord");
  Vector alpha(M);
  if (dist.kind == ProposalKind::Uniform) {
    for (Index i = 0; i < M; ++i) alpha(i) = chord.lo + (chord.hi - chord.lo) * rng.uniform_open();
  } else {
    const double sigma = dist.sigma_along(s);
    for (Index i = 0; i < M; ++i)
      alpha(i) = sigma * detail::truncated_normal_draw(chord.lo / sigma, chord.hi / sigma, rng.uniform_open());
  }
  return alpha;
}

/// log q(alpha_to | centred at alpha_from) on the chord.
inline double log_proposal(double alpha_to, double alpha_from, const ChordInterval& chord, const ProposalDist& dist,
                           double sigma) {
  if (dist.kind == ProposalKind::Uniform) return -std::log(chord.hi - chord.lo);
  const double z = (alpha_to - alpha_from) / sigma;
  return -0.5 * z * z - 0.5 * std::log(2.0 * kPi) - std::log(sigma) -
         detail::log_normal_mass((chord.lo - alpha_from) / sigma, (chord.hi - alpha_from) / sigma);
}

/// Weights over the candidates 0..M (index 0 is the current state, alpha 0).
/// Candidate i is scored by log pi_i + sum_{j != i} log q(alpha_j | alpha_i),
/// the probability of generating the other candidates from it.
inline Vector transition_weights(const Eigen::Ref<const Vector>& logpi, const Eigen::Ref<const Vector>& alphas,
                                 const ProposalDist& dist, KernelKind kernel, const ChordInterval& chord = {},
                                 double sigma = 1.0) {
  const Index M = alphas.size();
  require(logpi.size() == M + 1, "transition_weights: need M+1 log densities");
  if (std::isnan(logpi(0)) || logpi(0) == -kInf)
    throw NumericalError("transition_weights: current state has zero or undefined density");
  Vector score = logpi;
  if (dist.kind == ProposalKind::TruncatedNormal) {
    Vector a(M + 1);
    a(0) = 0.0;
    a.tail(M) = alphas;
    for (Index i = 0; i <= M; ++i)
      for (Index j = 0; j <= M; ++j)
        if (j != i) score(i) += log_proposal(a(j), a(i), chord, dist, sigma);
  }
  Vector w(M + 1);
  if (kernel == KernelKind::Peskun) {
    const double inv_m = 1.0 / static_cast<double>(M);
    double sum = 0.0;
    for (Index i = 1; i <= M; ++i) {
      const double d = score(i) - score(0);
      w(i) = inv_m * (d >= 0.0 ? 1.0 : std::exp(d));
      sum += w(i);
    }
    w(0) = std::max(0.0, 1.0 - sum);
  } else {
    const double lse = log_sum_exp(score);
    w = (score.array() - lse).exp().matrix();
  }
  return w;
}

/// Categorical draw that visits the proposals 1..M before the current state,
/// so with M = 1 the move is taken exactly when u < w_1.
inline Index select_candidate(const Eigen::Ref<const Vector>& w, double u) {
  double cum = 0.0;
  for (Index i = 1; i < w.size(); ++i) {
    cum += w(i);
    if (u < cum) return i;
  }
  return 0;
}

using LogDensity = std::function<double(const Vector&)>;

struct SamplerConfig {
  Index n_samples = 1000;  // retained per chain
  Index M = 1;
  Index n_chains = 8;
  Index burn_in = 1000;
  Index thin = 10;
  ProposalDist proposal;
  KernelKind kernel = KernelKind::Peskun;
  std::uint64_t seed = 0;
  bool parallel = true;
};

struct ChainState {
  Vector current;
  RandomStream rng;
  Index step_index = 0;
};

/// Uniform start in the largest origin-centred ball inside H.
inline Vector initial_point(const HPolytope& H, RandomStream& rng) {
  const Vector radii = H.b().cwiseQuotient(H.A().rowwise().norm());
  const double radius = radii.minCoeff();
  if (!(radius > 0.0)) throw DomainError("initial_point: origin is not interior to the polytope");
  return random_in_ball(rng, H.dim(), radius);
}

/// One hit-and-run step; returns the chosen candidate index.
inline Index hit_and_run_step(ChainState& state, const HPolytope& H, const LogDensity& logpdf, double& current_logpi,
                              const SamplerConfig& cfg) {
  const Index K = H.dim();
  const Vector s = random_direction(state.rng, K);
  const ChordInterval chord = chord_extremes(state.current, s, H);
  const Vector alphas = propose(chord, cfg.M, cfg.proposal, s, state.rng);
  Vector logpi(cfg.M + 1);
  logpi(0) = current_logpi;
  Matrix cands(K, cfg.M);
  for (Index i = 0; i < cfg.M; ++i) {
    cands.col(i) = state.current + alphas(i) * s;
    const auto cand = cands.col(i);
    if (((H.A() * cand - H.b()).array() >= 0.0).any()) {
      logpi(i + 1) = -kInf;  // rounding put the draw on or past the boundary
      continue;
    }
    const double lp = logpdf(cand);
    if (!std::isfinite(lp)) throw NumericalError("run_chains: target density is not finite inside the polytope");
    logpi(i + 1) = lp;
  }
  const double sigma = cfg.proposal.kind == ProposalKind::TruncatedNormal ? cfg.proposal.sigma_along(s) : 1.0;
  const Vector w = transition_weights(logpi, alphas, cfg.proposal, cfg.kernel, chord, sigma);
  const Index k = select_candidate(w, state.rng.uniform());
  if (k > 0) {
    state.current = cands.col(k - 1);
    current_logpi = logpi(k);
  }
  ++state.step_index;
  return k;
}

struct SamplerResult {
  std::vector<Matrix> chains;  // K x n_samples each
  ChainDiagnostics diagnostics;
  std::vector<double> acceptance;  // fraction of steps that moved, per chain

  /// All retained draws, chain after chain (K x n_chains*n_samples).
  Matrix samples() const {
    if (chains.empty()) return {};
    Matrix out(chains.front().rows(), chains.front().cols() * static_cast<Index>(chains.size()));
    for (std::size_t c = 0; c < chains.size(); ++c)
      out.middleCols(static_cast<Index>(c) * chains.front().cols(), chains.front().cols()) = chains[c];
    return out;
  }
};

inline Matrix run_chain(const HPolytope& H, const LogDensity& logpdf, const SamplerConfig& cfg, Index chain_id,
                        double* acceptance = nullptr) {
  ChainState state{Vector(), RandomStream(cfg.seed).substream("mcmc").substream(static_cast<std::uint64_t>(chain_id))};
  state.current = initial_point(H, state.rng);
  double lp = logpdf(state.current);
  if (!std::isfinite(lp)) throw NumericalError("run_chains: target density is not finite at the start point");
  Matrix out(H.dim(), cfg.n_samples);
  Index moved = 0;
  const Index total = cfg.burn_in + cfg.n_samples * cfg.thin;
  for (Index step = 1; step <= total; ++step) {
    if (hit_and_run_step(state, H, logpdf, lp, cfg) > 0) ++moved;
    if (step > cfg.burn_in && (step - cfg.burn_in) % cfg.thin == 0) out.col((step - cfg.burn_in) / cfg.thin - 1) = state.current;
  }
  if (acceptance) *acceptance = static_cast<double>(moved) / static_cast<double>(total);
  return out;
}

inline SamplerResult run_chains(const HPolytope& H, const LogDensity& logpdf, const SamplerConfig& cfg) {
  require(cfg.n_chains >= 1 && cfg.n_samples >= 1 && cfg.M >= 1 && cfg.thin >= 1 && cfg.burn_in >= 0,
          "run_chains: invalid sampler configuration");
  SamplerResult res;
  res.chains.resize(static_cast<std::size_t>(cfg.n_chains));
  res.acceptance.resize(static_cast<std::size_t>(cfg.n_chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.n_chains));
  auto work = [&](Index c) {
    const auto i = static_cast<std::size_t>(c);
    try {
      res.chains[i] = run_chain(H, logpdf, cfg, c, &res.acceptance[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (cfg.parallel && cfg.n_chains > 1) {
    std::vector<std::thread> threads;
    for (Index c = 0; c < cfg.n_chains; ++c) threads.emplace_back(work, c);
    for (auto& t : threads) t.join();
  } else {
    for (Index c = 0; c < cfg.n_chains; ++c) work(c);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  if (cfg.n_chains >= 2 && cfg.n_samples >= 4) res.diagnostics = diagnose(res.chains);
  return res;
}

}  // namespace polyflow

#endif  // POLYFLOW_MCMC_HPP
