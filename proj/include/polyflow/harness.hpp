// Targets and evaluation for the experiments: Gaussian mixtures restricted to
// a polytope, Monte Carlo volume and normalizing constants, importance-weight
// metrics of trained flows, and 2D kernel density grids for plotting.

#ifndef POLYFLOW_HARNESS_HPP
#define POLYFLOW_HARNESS_HPP

#include "polyflow/lp.hpp"
#include "polyflow/polytope.hpp"
#include "polyflow/random.hpp"

#include <string>
#include <utility>
#include <vector>

namespace polyflow {

class MixtureOfGaussians {
 public:
  MixtureOfGaussians() = default;
  MixtureOfGaussians(Vector weights, std::vector<Vector> means, std::vector<Matrix> covariances)
      : weights_(std::move(weights)), means_(std::move(means)), covs_(std::move(covariances)) {
    require(weights_.size() >= 1 && static_cast<std::size_t>(weights_.size()) == means_.size() &&
                means_.size() == covs_.size(),
            "MixtureOfGaussians: weights, means and covariances must have the same count");
    if (!(weights_.array() > 0.0).all()) throw DomainError("MixtureOfGaussians: weights must be positive");
    if (std::abs(weights_.sum() - 1.0) > 1e-9) throw DomainError("MixtureOfGaussians: weights must sum to one");
    const Index K = means_.front().size();
    for (std::size_t i = 0; i < means_.size(); ++i) {
      require(means_[i].size() == K && covs_[i].rows() == K && covs_[i].cols() == K,
              "MixtureOfGaussians: component dimensions differ");
      Eigen::LLT<Matrix> llt(covs_[i]);
      if (llt.info() != Eigen::Success || !covs_[i].isApprox(covs_[i].transpose()))
        throw DomainError("MixtureOfGaussians: covariance " + std::to_string(i) + " is not symmetric positive definite");
      const Matrix L = llt.matrixL();
      chol_.push_back(L);
      log_norm_.push_back(std::log(weights_(static_cast<Index>(i))) - 0.5 * static_cast<double>(K) * std::log(2.0 * kPi) -
                          L.diagonal().array().log().sum());
    }
  }

  Index dim() const { return means_.front().size(); }
  Index components() const { return weights_.size(); }
  const Vector& weights() const { return weights_; }
  const std::vector<Vector>& means() const { return means_; }
  const std::vector<Matrix>& covariances() const { return covs_; }

  /// log sum_i w_i N(v; mu_i, Sigma_i), unnormalized with respect to any support.
  double logpdf(const Eigen::Ref<const Vector>& v) const {
    require(v.size() == dim(), "MixtureOfGaussians::logpdf: wrong dimension");
    Vector terms(components());
    for (Index i = 0; i < components(); ++i) {
      const auto k = static_cast<std::size_t>(i);
      const Vector z = chol_[k].triangularView<Eigen::Lower>().solve(v - means_[k]);
      terms(i) = log_norm_[k] - 0.5 * z.squaredNorm();
    }
    return log_sum_exp(terms);
  }

 private:
  Vector weights_;
  std::vector<Vector> means_;
  std::vector<Matrix> covs_;
  std::vector<Matrix> chol_;
  std::vector<double> log_norm_;
};

inline double mog_logpdf(const Eigen::Ref<const Vector>& v, const MixtureOfGaussians& mog) { return mog.logpdf(v); }

/// Three equal-weight isotropic components with means at -d e_0, +d e_2 and
/// +d e_3 (the layout of the polytope experiment), variance `var`.
inline MixtureOfGaussians polytope_mixture(Index K, double d = 1.015, double var = 0.05) {
  require(K >= 4, "polytope_mixture: need at least four dimensions");
  std::vector<Vector> means(3, Vector::Zero(K));
  means[0](0) = -d;
  means[1](2) = d;
  means[2](3) = d;
  return {Vector::Constant(3, 1.0 / 3.0), means, std::vector<Matrix>(3, var * Matrix::Identity(K, K))};
}

/// Means at +d e_0, +d e_1, +d e_2 (the hypercube experiment).
inline MixtureOfGaussians hypercube_mixture(Index K, double d = 1.015, double var = 0.05) {
  require(K >= 3, "hypercube_mixture: need at least three dimensions");
  std::vector<Vector> means(3, Vector::Zero(K));
  for (std::size_t i = 0; i < 3; ++i) means[i](static_cast<Index>(i)) = d;
  return {Vector::Constant(3, 1.0 / 3.0), means, std::vector<Matrix>(3, var * Matrix::Identity(K, K))};
}

/// Radius of an origin-centred ball containing H: the largest vertex norm for
/// small dimensions, otherwise the norm of the LP bounding box corner.
inline double circumscribed_radius(const HPolytope& H) {
  if (H.dim() <= 6 && H.rows() <= 64) {
    const Matrix V = enumerate_vertices(H);
    if (V.cols() > 0) return V.colwise().norm().maxCoeff();
  }
  const Index K = H.dim();
  Vector corner(K);
  for (Index k = 0; k < K; ++k) {
    const Vector e = Vector::Unit(K, k);
    const LPSolution hi = solve_lp(e, H, true);
    const LPSolution lo = solve_lp(e, H, false);
    if (!hi.optimal() || !lo.optimal()) throw UnboundedError("circumscribed_radius: polytope is unbounded");
    corner(k) = std::max(std::abs(hi.objective), std::abs(lo.objective));
  }
  return corner.norm();
}

inline double log_unit_ball_volume(Index K) {
  const double k = static_cast<double>(K);
  return 0.5 * k * std::log(kPi) - std::lgamma(0.5 * k + 1.0);
}

struct VolumeEstimate {
  double volume = 0.0;
  double std_error = 0.0;
  double acceptance = 0.0;
};

/// Rejection estimate of vol(H) from n uniform draws in the ball B(phi).
inline VolumeEstimate estimate_volume(const HPolytope& H, Index n, RandomStream rng, double phi = -1.0) {
  require(n >= 1, "estimate_volume: need at least one draw");
  if (phi <= 0.0) phi = circumscribed_radius(H);
  const Index K = H.dim();
  Index hits = 0;
  for (Index i = 0; i < n; ++i)
    if (H.contains(random_in_ball(rng, K, phi), 0.0)) ++hits;
  if (hits == 0) throw NumericalError("estimate_volume: no draw landed inside the polytope");
  const double p = static_cast<double>(hits) / static_cast<double>(n);
  const double ball = std::exp(log_unit_ball_volume(K) + static_cast<double>(K) * std::log(phi));
  return {ball * p, ball * std::sqrt(p * (1.0 - p) / static_cast<double>(n)), p};
}

/// Z = (vol / N) sum_i p(v_i) over uniform draws v_i (columns of U).
template <class LogPdf>
double estimate_Z(const LogPdf& logpdf, double volume, const Matrix& U) {
  require(U.cols() >= 1, "estimate_Z: need uniform samples");
  Vector lp(U.cols());
  for (Index j = 0; j < U.cols(); ++j) lp(j) = logpdf(Vector(U.col(j)));
  return volume * std::exp(log_sum_exp(lp) - std::log(static_cast<double>(U.cols())));
}

struct MetricsReport {
  double kl_nats = 0.0;
  double ess_pct = 0.0;
  double outside_pct = 0.0;
  double z_estimate = 0.0;  // Z_KL = mean importance weight over inside samples
  Index n_samples = 0;
  Index n_inside = 0;
  std::uint64_t seed = 0;
};

/// KL(q || p) = mean(ln q - ln p~) + ln Z with Z the normalizing constant of
/// p~ on the polytope; ESS = (sum w)^2 / sum w^2 with w = p~ / q. Samples
/// outside the polytope (beyond the default 1e-9 slack) are counted in
/// outside_pct and excluded from the rest.
inline MetricsReport flow_metrics(const Matrix& V, const Eigen::Ref<const Vector>& logq,
                                  const Eigen::Ref<const Vector>& logp, double Z, const HPolytope& H) {
  require(V.cols() == logq.size() && V.cols() == logp.size(), "flow_metrics: arrays differ in length");
  require(V.cols() >= 1, "flow_metrics: no samples");
  if (!(Z > 0.0)) throw DomainError("flow_metrics: normalizing constant must be positive");
  std::vector<double> lw;
  double sum_diff = 0.0;
  for (Index j = 0; j < V.cols(); ++j) {
    if (!H.contains(V.col(j)) || !std::isfinite(logq(j))) continue;
    if (!std::isfinite(logp(j))) throw NumericalError("flow_metrics: target log density is not finite");
    sum_diff += logq(j) - logp(j);
    lw.push_back(logp(j) - logq(j));
  }
  MetricsReport r;
  r.n_samples = V.cols();
  r.n_inside = static_cast<Index>(lw.size());
  r.outside_pct = 100.0 * static_cast<double>(r.n_samples - r.n_inside) / static_cast<double>(r.n_samples);
  if (lw.empty()) throw NumericalError("flow_metrics: all importance weights are zero");
  const Eigen::Map<const Vector> logw(lw.data(), static_cast<Index>(lw.size()));
  const double n = static_cast<double>(lw.size());
  r.kl_nats = sum_diff / n + std::log(Z);
  r.z_estimate = std::exp(log_sum_exp(logw) - std::log(n));
  r.ess_pct = 100.0 * std::exp(2.0 * log_sum_exp(logw) - log_sum_exp(2.0 * logw)) / n;
  return r;
}

/// Gaussian kernel density estimate of the (i, j) marginal on a regular grid.
struct DensityGrid {
  Index dim_x = 0, dim_y = 0;
  Vector xs, ys;
  Matrix density;  // density(a, b) at (xs(a), ys(b))
};

inline DensityGrid kde_grid_2d(const Matrix& V, Index i, Index j, Index grid = 64, double pad = 0.1) {
  require(i >= 0 && j >= 0 && i < V.rows() && j < V.rows() && i != j, "kde_grid_2d: invalid dimensions");
  require(V.cols() >= 2 && grid >= 2, "kde_grid_2d: need at least two samples and two grid points");
  const double n = static_cast<double>(V.cols());
  const double scott = std::pow(n, -1.0 / 6.0);
  auto sd = [&](Index d) {
    const double m = V.row(d).mean();
    return std::sqrt((V.row(d).array() - m).square().sum() / (n - 1.0));
  };
  const double hx = std::max(1e-12, scott * sd(i));
  const double hy = std::max(1e-12, scott * sd(j));
  DensityGrid g;
  g.dim_x = i;
  g.dim_y = j;
  const double xmin = V.row(i).minCoeff(), xmax = V.row(i).maxCoeff();
  const double ymin = V.row(j).minCoeff(), ymax = V.row(j).maxCoeff();
  g.xs = Vector::LinSpaced(grid, xmin - pad * (xmax - xmin), xmax + pad * (xmax - xmin));
  g.ys = Vector::LinSpaced(grid, ymin - pad * (ymax - ymin), ymax + pad * (ymax - ymin));
  // Separable kernel: density = Kx * Ky' / (n hx hy 2 pi).
  Matrix Kx(grid, V.cols()), Ky(grid, V.cols());
  for (Index s = 0; s < V.cols(); ++s) {
    Kx.col(s) = (-0.5 * ((g.xs.array() - V(i, s)) / hx).square()).exp().matrix();
    Ky.col(s) = (-0.5 * ((g.ys.array() - V(j, s)) / hy).square()).exp().matrix();
  }
  g.density = Kx * Ky.transpose() / (n * hx * hy * 2.0 * kPi);
  return g;
}

}  // namespace polyflow

#endif  // POLYFLOW_HARNESS_HPP
