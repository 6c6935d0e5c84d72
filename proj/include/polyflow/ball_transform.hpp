// Homeomorphism between a polytope containing the origin and the unit ball,
// built from chords through the origin, plus the polar-cylinder coordinates
// of the ball and the log-determinants of the whole chain.
//
//   v = alpha(s) * r^(1/exponent) * s,   beta = r * s,   s on S^{K-1}
//
// alpha(s) is the distance from the origin to the boundary along s.

#ifndef POLYFLOW_BALL_TRANSFORM_HPP
#define POLYFLOW_BALL_TRANSFORM_HPP

#include "polyflow/polytope.hpp"

#include <algorithm>

namespace polyflow {

struct BallMapConfig {
  double exponent = 0.0;  // <= 0 selects 1/K
  bool closed = false;    // admit the boundary sphere

  double exponent_for(Index K) const { return exponent > 0.0 ? exponent : 1.0 / static_cast<double>(K); }
};

inline constexpr double kFacetTieMargin = 1e-10;

struct Chord {
  double alpha = kInf;  // distance to the boundary
  Index facet = -1;     // tightest row
  double second = kInf; // next-smallest positive ratio
};

/// Distance to the boundary of H from the origin along s, with the facet hit.
inline Chord chord(const Eigen::Ref<const Vector>& s, const HPolytope& H) {
  require(s.size() == H.dim(), "chord: direction has wrong dimension");
  const Vector as = H.A() * s;
  Chord c;
  for (Index i = 0; i < H.rows(); ++i) {
    if (as(i) < 1e-14) continue;
    const double ratio = H.b()(i) / as(i);
    if (ratio < c.alpha) {
      c.second = c.alpha;
      c.alpha = ratio;
      c.facet = i;
    } else if (ratio < c.second) {
      c.second = ratio;
    }
  }
  if (c.facet < 0) throw UnboundedError("chord_scale: polytope is unbounded along the direction");
  return c;
}

inline double chord_scale(const Eigen::Ref<const Vector>& s, const HPolytope& H) { return chord(s, H).alpha; }

/// Throws if the two closest facets along s tie within the relative margin.
inline void require_unique_facet(const Chord& c) {
  if (c.second - c.alpha <= kFacetTieMargin * c.alpha)
    throw NonDifferentiableError("ball map: chord ends on a facet tie (vertex or edge direction)");
}

inline Vector to_ball(const Eigen::Ref<const Vector>& v, const HPolytope& H, const BallMapConfig& cfg = {}) {
  require(v.size() == H.dim(), "to_ball: point has wrong dimension");
  const double d = v.norm();
  if (d == 0.0) return Vector::Zero(v.size());
  const Vector s = v / d;
  const double alpha = chord_scale(s, H);
  const double r = std::pow(d / alpha, cfg.exponent_for(v.size()));
  if (r > 1.0 + 1e-12) throw DomainError("to_ball: point lies outside the polytope");
  if (r >= 1.0 && !cfg.closed) throw DomainError("to_ball: point lies on the boundary (open-ball mode)");
  return std::min(r, 1.0) * s;
}

inline Vector from_ball(const Eigen::Ref<const Vector>& beta, const HPolytope& H, const BallMapConfig& cfg = {}) {
  require(beta.size() == H.dim(), "from_ball: point has wrong dimension");
  const double r = beta.norm();
  if (r == 0.0) return Vector::Zero(beta.size());
  if (r > 1.0 + 1e-12) throw DomainError("from_ball: point lies outside the unit ball");
  if (r >= 1.0 && !cfg.closed) throw DomainError("from_ball: point lies on the unit sphere (open-ball mode)");
  const Vector s = beta / r;
  const double q = 1.0 / cfg.exponent_for(beta.size());
  return chord_scale(s, H) * std::pow(std::min(r, 1.0), q) * s;
}

inline Matrix to_ball_batch(const Matrix& V, const HPolytope& H, const BallMapConfig& cfg = {}) {
  Matrix out(V.rows(), V.cols());
  for (Index j = 0; j < V.cols(); ++j) out.col(j) = to_ball(V.col(j), H, cfg);
  return out;
}

inline Matrix from_ball_batch(const Matrix& B, const HPolytope& H, const BallMapConfig& cfg = {}) {
  Matrix out(B.rows(), B.cols());
  for (Index j = 0; j < B.cols(); ++j) out.col(j) = from_ball(B.col(j), H, cfg);
  return out;
}

struct BallJacobian {
  Matrix J;  // dv / dbeta
  double log_det = 0.0;
};

/// Jacobian of from_ball at beta:
///   J = alpha r^(q-1) [I + q s s' - s a' / (a.s)],  det J = q (alpha r^(q-1))^K,
/// with a the tightest row along s and q = 1/exponent.
inline BallJacobian jacobian_ball(const Eigen::Ref<const Vector>& beta, const HPolytope& H,
                                  const BallMapConfig& cfg = {}) {
  const Index K = H.dim();
  require(beta.size() == K, "jacobian_ball: point has wrong dimension");
  const double q = 1.0 / cfg.exponent_for(K);
  const double r = beta.norm();
  BallJacobian out;
  if (r == 0.0) {
    // Limit at the origin: finite only for q <= 1.
    if (q > 1.0) {
      out.J = Matrix::Zero(K, K);
      out.log_det = -kInf;
      return out;
    }
    throw NonDifferentiableError("jacobian_ball: map is not differentiable at the origin for exponent 1");
  }
  if (r >= 1.0 && !cfg.closed) throw DomainError("jacobian_ball: point lies on the unit sphere (open-ball mode)");
  const Vector s = beta / r;
  const Chord c = chord(s, H);
  require_unique_facet(c);
  const Vector a = H.A().row(c.facet).transpose();
  const double scale = c.alpha * std::pow(r, q - 1.0);
  out.J = Matrix::Identity(K, K) + q * s * s.transpose() - s * a.transpose() / a.dot(s);
  out.J *= scale;
  out.log_det = std::log(q) + static_cast<double>(K) * std::log(c.alpha) +
                static_cast<double>(K) * (q - 1.0) * std::log(r);
  return out;
}

/// log|det dv/dbeta| for each column of B.
inline Vector logdet_ball_batch(const Matrix& B, const HPolytope& H, const BallMapConfig& cfg = {}) {
  Vector out(B.cols());
  for (Index j = 0; j < B.cols(); ++j) out(j) = jacobian_ball(B.col(j), H, cfg).log_det;
  return out;
}

// ---------------------------------------------------------------------------
// Cylinder coordinates of the sphere S^{K-1}: one angle theta and heights
// c_3..c_K. Each step peels off the last coordinate c_D = x_D and rescales the
// rest by 1/sqrt(1 - c_D^2); the map is area preserving up to the factor
// prod (1 - c_D^2)^((D-3)/2).

struct CylinderPoint {
  double theta = 0.0;
  Vector c;  // c(0) = c_3, ..., c(K-3) = c_K
};

inline CylinderPoint cylinder_map(const Eigen::Ref<const Vector>& s) {
  const Index K = s.size();
  require(K >= 2, "cylinder_map: dimension must be at least 2");
  CylinderPoint out;
  out.c.resize(K - 2);
  Vector x = s;
  for (Index D = K; D >= 3; --D) {
    const double cD = x(D - 1);
    const double w2 = 1.0 - cD * cD;
    if (!(w2 > 1e-24)) throw NonDifferentiableError("cylinder_map: point is at a pole");
    out.c(D - 3) = cD;
    x.head(D - 1) /= std::sqrt(w2);
  }
  out.theta = std::atan2(x(0), x(1));
  return out;
}

inline Vector inverse_cylinder(double theta, const Eigen::Ref<const Vector>& c) {
  const Index K = c.size() + 2;
  Vector x(K);
  x(0) = std::sin(theta);
  x(1) = std::cos(theta);
  for (Index D = 3; D <= K; ++D) {
    const double cD = c(D - 3);
    if (!(std::abs(cD) < 1.0)) throw DomainError("inverse_cylinder: heights must lie in (-1, 1)");
    x.head(D - 1) *= std::sqrt(1.0 - cD * cD);
    x(D - 1) = cD;
  }
  return x;
}

inline Vector inverse_cylinder(const CylinderPoint& p) { return inverse_cylinder(p.theta, p.c); }

/// d s / d(theta, c_3..c_K), a K x (K-1) matrix.
inline Matrix inverse_cylinder_jacobian(double theta, const Eigen::Ref<const Vector>& c) {
  const Index K = c.size() + 2;
  Vector x(K);
  Matrix J = Matrix::Zero(K, K - 1);
  x(0) = std::sin(theta);
  x(1) = std::cos(theta);
  J(0, 0) = std::cos(theta);
  J(1, 0) = -std::sin(theta);
  for (Index D = 3; D <= K; ++D) {
    const double cD = c(D - 3);
    if (!(std::abs(cD) < 1.0)) throw DomainError("inverse_cylinder: heights must lie in (-1, 1)");
    const double w = std::sqrt(1.0 - cD * cD);
    J.topLeftCorner(D - 1, D - 2) *= w;
    J.col(D - 2).head(D - 1) = (-cD / w) * x.head(D - 1);
    J(D - 1, D - 2) = 1.0;
    x.head(D - 1) *= w;
    x(D - 1) = cD;
  }
  return J;
}

/// log of the sphere area element in cylinder coordinates.
inline double cylinder_log_area(const Eigen::Ref<const Vector>& c) {
  double out = 0.0;
  for (Index i = 0; i < c.size(); ++i) {
    const double D = static_cast<double>(i + 3);
    if (D > 3.0) out += 0.5 * (D - 3.0) * std::log1p(-c(i) * c(i));
  }
  return out;
}

/// Polar-cylinder coordinates phi = [theta, c_3..c_K, r] of a ball point.
inline Vector ball_to_phi(const Eigen::Ref<const Vector>& beta) {
  const Index K = beta.size();
  const double r = beta.norm();
  if (r == 0.0) throw NonDifferentiableError("ball_to_phi: origin has no direction");
  const CylinderPoint p = cylinder_map(beta / r);
  Vector phi(K);
  phi(0) = p.theta;
  phi.segment(1, K - 2) = p.c;
  phi(K - 1) = r;
  return phi;
}

inline Vector phi_to_ball(const Eigen::Ref<const Vector>& phi) {
  const Index K = phi.size();
  return phi(K - 1) * inverse_cylinder(phi(0), phi.segment(1, K - 2));
}

/// Full Jacobian dv/dphi = J^{v beta} J^{beta phi}; columns ordered as phi.
inline Matrix jacobian_vphi(const Eigen::Ref<const Vector>& phi, const HPolytope& H, const BallMapConfig& cfg = {}) {
  const Index K = phi.size();
  require(K == H.dim(), "jacobian_vphi: wrong dimension");
  const double r = phi(K - 1);
  const Vector c = phi.segment(1, K - 2);
  const Vector s = inverse_cylinder(phi(0), c);
  Matrix Jbp(K, K);
  Jbp.leftCols(K - 1) = r * inverse_cylinder_jacobian(phi(0), c);
  Jbp.col(K - 1) = s;
  return jacobian_ball(r * s, H, cfg).J * Jbp;
}

/// log|det dv/dphi| from the explicit matrix product.
inline double logdet_vphi(const Eigen::Ref<const Vector>& phi, const HPolytope& H, const BallMapConfig& cfg = {}) {
  const Matrix J = jacobian_vphi(phi, H, cfg);
  const Eigen::PartialPivLU<Matrix> lu(J);
  return lu.matrixLU().diagonal().cwiseAbs().array().log().sum();
}

/// Closed form of the same quantity:
///   log|det J^{v beta}| + (K-1) log r + log area(c).
inline double logdet_vphi_closed(const Eigen::Ref<const Vector>& phi, const HPolytope& H,
                                 const BallMapConfig& cfg = {}) {
  const Index K = phi.size();
  const double r = phi(K - 1);
  return jacobian_ball(phi_to_ball(phi), H, cfg).log_det + static_cast<double>(K - 1) * std::log(r) +
         cylinder_log_area(phi.segment(1, K - 2));
}

/// log|det dv/dphi| for polytope points given as columns of V.
inline Vector composite_logdet_vtheta(const Matrix& V, const HPolytope& H, const BallMapConfig& cfg = {}) {
  Vector out(V.cols());
  for (Index j = 0; j < V.cols(); ++j) out(j) = logdet_vphi(ball_to_phi(to_ball(V.col(j), H, cfg)), H, cfg);
  return out;
}

}  // namespace polyflow

#endif  // POLYFLOW_BALL_TRANSFORM_HPP
