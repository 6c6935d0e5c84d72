// Convergence diagnostics for sets of MCMC chains: split R-hat and the
// autocorrelation effective sample size with Geyer's initial positive and
// monotone sequence truncation (the estimator used by ArviZ).

#ifndef POLYFLOW_DIAGNOSTICS_HPP
#define POLYFLOW_DIAGNOSTICS_HPP

#include "polyflow/core.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>
#include <vector>

namespace polyflow {

/// Each row is one chain.
using ChainMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

inline double sample_variance(const Eigen::Ref<const Vector>& x) {
  const double m = x.mean();
  return (x.array() - m).square().sum() / static_cast<double>(x.size() - 1);
}

/// Biased autocovariance of x at lags 0..n-1 by zero-padded FFT.
inline Vector autocovariance(const Eigen::Ref<const Vector>& x) {
  const Index n = x.size();
  Index len = 1;
  while (len < 2 * n) len <<= 1;
  std::vector<double> buf(static_cast<std::size_t>(len), 0.0);
  const double m = x.mean();
  for (Index i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = x(i) - m;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, buf);
  for (auto& z : spec) z = std::norm(z);
  std::vector<double> back;
  fft.inv(back, spec);
  Vector out(n);
  for (Index i = 0; i < n; ++i) out(i) = back[static_cast<std::size_t>(i)] / static_cast<double>(n);
  return out;
}

inline void require_chains(const ChainMatrix& chains, Index min_chains, const char* who) {
  if (chains.rows() < min_chains || chains.cols() < 4)
    throw DimensionError(std::string(who) + ": need at least " + std::to_string(min_chains) +
                         " chains with at least 4 draws");
  if (!chains.allFinite()) throw NumericalError(std::string(who) + ": non-finite draws");
}

}  // namespace detail

/// Split R-hat of one scalar quantity.
inline double rhat(const ChainMatrix& chains) {
  detail::require_chains(chains, 1, "rhat");
  const Index half = chains.cols() / 2;
  const Index m = 2 * chains.rows();
  Vector means(m), vars(m);
  for (Index c = 0; c < chains.rows(); ++c) {
    const Vector first = chains.row(c).head(half).transpose();
    const Vector second = chains.row(c).tail(half).transpose();
    means(2 * c) = first.mean();
    means(2 * c + 1) = second.mean();
    vars(2 * c) = detail::sample_variance(first);
    vars(2 * c + 1) = detail::sample_variance(second);
  }
  const double W = vars.mean();
  if (!(W > 0.0)) throw NumericalError("rhat: chains have zero within-chain variance");
  const double n = static_cast<double>(half);
  const double B_over_n = detail::sample_variance(means);
  const double var_plus = (n - 1.0) / n * W + B_over_n;
  return std::sqrt(var_plus / W);
}

/// Effective sample size of one scalar quantity, in draws.
inline double ess(const ChainMatrix& chains) {
  detail::require_chains(chains, 1, "ess");
  const Index n_chain = chains.rows();
  const Index n_draw = chains.cols();
  const double total = static_cast<double>(n_chain * n_draw);
  if (chains.maxCoeff() - chains.minCoeff() < 1e-15) throw NumericalError("ess: chains are constant");

  Matrix acov(n_chain, n_draw);
  Vector chain_mean(n_chain);
  for (Index c = 0; c < n_chain; ++c) {
    const Vector x = chains.row(c).transpose();
    acov.row(c) = detail::autocovariance(x).transpose();
    chain_mean(c) = x.mean();
  }
  const double nd = static_cast<double>(n_draw);
  const double mean_var = acov.col(0).mean() * nd / (nd - 1.0);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (n_chain > 1) var_plus += detail::sample_variance(chain_mean);

  auto rho = [&](Index t) { return 1.0 - (mean_var - acov.col(t).mean()) / var_plus; };
  Vector rho_hat = Vector::Zero(n_draw);
  double rho_even = 1.0;
  double rho_odd = rho(1);
  rho_hat(0) = rho_even;
  rho_hat(1) = rho_odd;

  // Initial positive sequence.
  Index t = 1;
  while (t < n_draw - 3 && rho_even + rho_odd > 0.0) {
    rho_even = rho(t + 1);
    rho_odd = rho(t + 2);
    if (rho_even + rho_odd >= 0.0) {
      rho_hat(t + 1) = rho_even;
      rho_hat(t + 2) = rho_odd;
    }
    t += 2;
  }
  const Index max_t = t - 2;
  if (rho_even > 0.0) rho_hat(max_t + 1) = rho_even;

  // Initial monotone sequence.
  t = 1;
  while (t <= max_t - 2) {
    if (rho_hat(t + 1) + rho_hat(t + 2) > rho_hat(t - 1) + rho_hat(t)) {
      rho_hat(t + 1) = 0.5 * (rho_hat(t - 1) + rho_hat(t));
      rho_hat(t + 2) = rho_hat(t + 1);
    }
    t += 2;
  }
  double tau = -1.0 + 2.0 * rho_hat.head(max_t + 1).sum() + rho_hat(max_t + 1);
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

/// ESS as a percentage of the retained draws, capped at 100.
inline double ess_percent(const ChainMatrix& chains) {
  const double pct = 100.0 * ess(chains) / static_cast<double>(chains.size());
  return std::min(pct, 100.0);
}

struct ChainDiagnostics {
  std::vector<double> rhat;
  std::vector<double> ess_pct;
};

/// chains[c] is a K x N matrix of draws for chain c.
inline ChainDiagnostics diagnose(const std::vector<Matrix>& chains) {
  require(!chains.empty(), "diagnose: no chains");
  const Index K = chains.front().rows();
  const Index N = chains.front().cols();
  for (const Matrix& c : chains) require(c.rows() == K && c.cols() == N, "diagnose: chains differ in shape");
  ChainDiagnostics out;
  ChainMatrix dim(static_cast<Index>(chains.size()), N);
  for (Index k = 0; k < K; ++k) {
    for (std::size_t c = 0; c < chains.size(); ++c) dim.row(static_cast<Index>(c)) = chains[c].row(k);
    out.rhat.push_back(rhat(dim));
    out.ess_pct.push_back(ess_percent(dim));
  }
  return out;
}

}  // namespace polyflow

#endif  // POLYFLOW_DIAGNOSTICS_HPP
