// Coordinates for V-represented polytopes: maximum-entropy barycentric
// coordinates, the isometric log-ratio transform with a Helmert basis, and a
// standardized projection onto the K-dimensional image of the polytope.
//
//   v --mec--> lambda --ilr--> z --P--> z^p --standardize--> z^t

#ifndef POLYFLOW_SIMPLEX_COORDS_HPP
#define POLYFLOW_SIMPLEX_COORDS_HPP

#include "polyflow/lp.hpp"
#include "polyflow/polytope.hpp"

#include <string>

namespace polyflow {

struct MecOptions {
  double tol = 1e-10;
  int max_iter = 100;
};

/// Log of the maximum-entropy barycentric coordinates of v with respect to the
/// columns of V. Newton on the dual F(eta) = log sum_i exp(eta.(v_i - v)),
/// whose minimizer gives lambda_i proportional to exp(eta.v_i). Returned in
/// log form since weights of far vertices underflow near a facet.
inline Vector mec_log(const Eigen::Ref<const Vector>& v, const VPolytope& P, const MecOptions& opt = {}) {
  const Matrix& V = P.V();
  const Index K = V.rows();
  const Index n = V.cols();
  require(v.size() == K, "mec: point has wrong dimension");
  const Matrix D = V.colwise() - v;  // K x n
  Vector eta = Vector::Zero(K);

  auto evaluate = [&](const Vector& e, Vector& loglambda) {
    const Vector logits = D.transpose() * e;
    const double lse = log_sum_exp(logits);
    loglambda = logits.array() - lse;
    return lse;
  };

  Vector loglambda(n);
  double F = evaluate(eta, loglambda);
  const double scale = std::max(1.0, v.lpNorm<Eigen::Infinity>());
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    const Vector lambda = loglambda.array().exp();
    const Vector g = D * lambda;
    if (g.lpNorm<Eigen::Infinity>() < opt.tol * scale) return loglambda;
    const Matrix Hs = D * lambda.asDiagonal() * D.transpose() - g * g.transpose();
    Eigen::LDLT<Matrix> ldlt(Hs);
    Vector step = -ldlt.solve(g);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) step = -g;
    const double slope = g.dot(step);
    const double gnorm = g.norm();
    double t = 1.0;
    Vector trial_log(n);
    // Armijo on F, or a drop in the KKT residual once F stalls in roundoff.
    auto accept = [&](double trial) {
      if (trial <= F + 1e-4 * t * slope) return true;
      return (D * trial_log.array().exp().matrix()).norm() <= (1.0 - 1e-4 * t) * gnorm;
    };
    double trial = evaluate(eta + t * step, trial_log);
    while (!accept(trial) && t > 1e-12) {
      t *= 0.5;
      trial = evaluate(eta + t * step, trial_log);
    }
    if (t <= 1e-12) break;
    eta += t * step;
    F = trial;
    loglambda = trial_log;
  }
  const Vector g = D * loglambda.array().exp().matrix();
  if (g.lpNorm<Eigen::Infinity>() < 1e3 * opt.tol * scale) return loglambda;
  throw ConvergenceError("mec: Newton did not converge (point outside or on the boundary of the polytope?)");
}

/// Largest t with v = V lambda, sum lambda = 1, lambda_i >= t (capped at 1);
/// positive exactly in the relative interior, -inf outside.
inline double interior_margin(const Eigen::Ref<const Vector>& v, const VPolytope& P) {
  const Matrix& V = P.V();
  const Index K = V.rows();
  const Index n = V.cols();
  Matrix A = Matrix::Zero(2 * K + 2 + n + 1, n + 1);
  Vector b = Vector::Zero(A.rows());
  A.block(0, 0, K, n) = V;
  A.block(K, 0, K, n) = -V;
  b.head(K) = v;
  b.segment(K, K) = -v;
  A.row(2 * K).head(n).setOnes();
  A.row(2 * K + 1).head(n).setConstant(-1.0);
  b(2 * K) = 1.0;
  b(2 * K + 1) = -1.0;
  A.block(2 * K + 2, 0, n, n) = -Matrix::Identity(n, n);
  A.block(2 * K + 2, n, n, 1).setOnes();
  A(2 * K + 2 + n, n) = 1.0;
  b(2 * K + 2 + n) = 1.0;
  const LPSolution sol = solve_lp(Vector::Unit(n + 1, n), A, b, true);
  return sol.optimal() ? sol.objective : -kInf;
}

/// Linear-form coordinates. Points on the boundary (margin below 1e-9) and
/// weights below 1e-300 are rejected.
inline Vector mec(const Eigen::Ref<const Vector>& v, const VPolytope& P, const MecOptions& opt = {}) {
  if (!(interior_margin(v, P) > 1e-9)) throw DomainError("mec: point is outside or on the boundary of the polytope");
  const Vector loglambda = mec_log(v, P, opt);
  if (loglambda.minCoeff() < std::log(1e-300)) throw DomainError("mec: point is on the boundary of the polytope");
  return loglambda.array().exp();
}

inline Vector mec_inverse(const Eigen::Ref<const Vector>& lambda, const VPolytope& P) {
  require(lambda.size() == P.V().cols(), "mec_inverse: wrong number of weights");
  if (!(lambda.array() > 0.0).all()) throw DomainError("mec_inverse: weights must be positive");
  return P.V() * lambda;
}

/// V x (V+1) Helmert contrast matrix: orthonormal rows orthogonal to 1.
inline Matrix helmert_basis(Index n_parts) {
  require(n_parts >= 2, "helmert_basis: need at least two parts");
  Matrix H = Matrix::Zero(n_parts - 1, n_parts);
  for (Index i = 1; i < n_parts; ++i) {
    const double norm = std::sqrt(static_cast<double>(i * (i + 1)));
    H.row(i - 1).head(i).setConstant(1.0 / norm);
    H(i - 1, i) = -static_cast<double>(i) / norm;
  }
  return H;
}

inline Vector ilr(const Eigen::Ref<const Vector>& lambda, const Matrix& H) {
  require(lambda.size() == H.cols(), "ilr: wrong number of parts");
  if (!(lambda.array() >= 1e-300).all()) throw DomainError("ilr: composition has a vanishing part");
  return H * lambda.array().log().matrix();
}

/// ilr from log parts.
inline Vector ilr_log(const Eigen::Ref<const Vector>& loglambda, const Matrix& H) {
  require(loglambda.size() == H.cols(), "ilr: wrong number of parts");
  if (!loglambda.allFinite()) throw DomainError("ilr: composition has a vanishing part");
  return H * loglambda;
}

inline Vector ilr_inv(const Eigen::Ref<const Vector>& z, const Matrix& H) {
  require(z.size() == H.rows(), "ilr_inv: wrong dimension");
  const Vector clr = H.transpose() * z;
  return (clr.array() - log_sum_exp(clr)).exp().matrix();
}

/// Orthogonal projection of ilr points onto their K-dimensional affine hull,
/// followed by per-coordinate standardization.
struct IlrProjection {
  Matrix P;     // K x V, orthonormal rows
  Vector zbar;  // V
  Vector mu;    // K
  Vector sigma; // K
  Vector singular_values;

  Index dim() const { return P.rows(); }

  Vector project(const Eigen::Ref<const Vector>& z) const { return (P * (z - zbar) - mu).cwiseQuotient(sigma); }
  Vector reconstruct(const Eigen::Ref<const Vector>& zt) const {
    return P.transpose() * (mu + sigma.cwiseProduct(zt)) + zbar;
  }
};

/// Z holds one ilr point per column.
inline IlrProjection fit_projection(const Matrix& Z, Index K, double rank_tol = 1e-8) {
  require(K >= 1 && K <= Z.rows(), "fit_projection: invalid dimension");
  if (Z.cols() < K + 1) throw DomainError("fit_projection: need at least K+1 points");
  IlrProjection out;
  out.zbar = Z.rowwise().mean();
  const Matrix C = (Z.colwise() - out.zbar).transpose();  // n x V
  Eigen::BDCSVD<Matrix> svd(C, Eigen::ComputeThinV);
  out.singular_values = svd.singularValues();
  const Vector& sv = out.singular_values;
  if (!(sv(0) > 0.0)) throw DomainError("fit_projection: points coincide");
  if (!(sv(K - 1) / sv(0) > rank_tol))
    throw DomainError("fit_projection: points span fewer than K dimensions (singular value ratio " +
                      std::to_string(sv(K - 1) / sv(0)) + ")");
  if (sv.size() > K && !(sv(K) / sv(0) < rank_tol))
    throw DomainError("fit_projection: points span more than K dimensions (singular value ratio " +
                      std::to_string(sv(K) / sv(0)) + ")");
  out.P = svd.matrixV().leftCols(K).transpose();
  const Matrix Zp = out.P * C.transpose();
  out.mu = Zp.rowwise().mean();
  out.sigma = ((Zp.colwise() - out.mu).array().square().rowwise().sum() / static_cast<double>(Z.cols() - 1))
                  .sqrt()
                  .matrix();
  if (!(out.sigma.array() > 0.0).all()) throw DomainError("fit_projection: zero spread along a projected axis");
  return out;
}

/// Everything needed to move between a V-polytope and standardized ilr space.
struct AitchisonMap {
  VPolytope polytope;
  Matrix H;  // Helmert basis
  IlrProjection projection;
  MecOptions mec_options;

  Index dim() const { return projection.dim(); }

  Vector to_zt(const Eigen::Ref<const Vector>& v) const {
    return projection.project(ilr_log(mec_log(v, polytope, mec_options), H));
  }
  Vector from_zt(const Eigen::Ref<const Vector>& zt) const {
    return polytope.V() * ilr_inv(projection.reconstruct(zt), H);
  }

  /// d v / d z^t = V (diag(lambda) - lambda lambda') H' P' diag(sigma).
  Matrix jacobian_vt(const Eigen::Ref<const Vector>& zt) const {
    const Vector lambda = ilr_inv(projection.reconstruct(zt), H);
    Matrix Jl = -lambda * lambda.transpose();
    Jl.diagonal() += lambda;
    return polytope.V() * Jl * H.transpose() * projection.P.transpose() * projection.sigma.asDiagonal();
  }

  double logdet_jvt(const Eigen::Ref<const Vector>& zt) const {
    const Eigen::PartialPivLU<Matrix> lu(jacobian_vt(zt));
    const double ld = lu.matrixLU().diagonal().cwiseAbs().array().log().sum();
    if (!std::isfinite(ld)) throw NumericalError("logdet_jvt: Jacobian is singular");
    return ld;
  }
};

/// Builds the map from training points (columns of X, inside conv(V)).
inline AitchisonMap fit_aitchison_map(const VPolytope& P, const Matrix& X, const MecOptions& opt = {}) {
  AitchisonMap map{P, helmert_basis(P.V().cols()), {}, opt};
  Matrix Z(P.V().cols() - 1, X.cols());
  for (Index j = 0; j < X.cols(); ++j) Z.col(j) = ilr_log(mec_log(X.col(j), P, opt), map.H);
  map.projection = fit_projection(Z, P.dim());
  return map;
}

}  // namespace polyflow

#endif  // POLYFLOW_SIMPLEX_COORDS_HPP
