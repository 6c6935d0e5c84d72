// Maximum-volume inscribed ellipsoid {E y + eps : ||y|| <= 1} of a
// full-dimensional polytope {A v <= b}.
//
// Primal-dual interior-point method of Zhang & Gao ("On numerical solution of
// the maximum volume ellipsoid problem", SIAM J. Optim. 2003). The iterate
// works on the rows rescaled by the slack at the starting interior point, the
// dual variables y weight the constraints and E^2 = (A' Y A)^{-1}.

#ifndef POLYFLOW_MVE_HPP
#define POLYFLOW_MVE_HPP

#include "polyflow/embedding.hpp"
#include "polyflow/polytope.hpp"

#include <sstream>

namespace polyflow {

/// v = E y + eps maps the unit ball onto the ellipsoid.
struct RoundingTransform {
  Matrix E;  // symmetric positive definite
  Vector eps;

  double log_det() const { return std::log(E.determinant()); }
};

struct MveOptions {
  double tol = 1e-8;
  int max_iter = 200;
  double min_mu = 1e-8;
  double step_fraction = 0.99;  // fraction-to-boundary lower bound is tau0 below
  double tau0 = 0.75;
};

struct MveReport {
  int iterations = 0;
  double residual = 0.0;
  double log_det = 0.0;
};

inline RoundingTransform max_volume_ellipsoid(const HPolytope& H, const MveOptions& opt = {},
                                              MveReport* report = nullptr) {
  const ChebyshevBall start = chebyshev_center(H);
  if (start.radius <= 0.0) throw DomainError("max_volume_ellipsoid: polytope is not full-dimensional");

  const Index m = H.rows();
  const Index n = H.dim();
  const double bnrm = H.b().norm();
  const Vector x0 = start.center;
  const Vector slack0 = H.b() - H.A() * x0;
  if (slack0.minCoeff() <= 0.0) throw NumericalError("max_volume_ellipsoid: start point is not interior");

  const Matrix A = slack0.cwiseInverse().asDiagonal() * H.A();
  Vector x = Vector::Zero(n);
  Vector y = Vector::Ones(m);
  Vector bmAx = Vector::Ones(m);
  Vector z(m), dx(n), Adx(m);
  Matrix E2(n, n);
  double astep = 0.0;
  double res = kInf;
  double objval = -kInf;

  for (int iter = 1; iter <= opt.max_iter; ++iter) {
    if (iter > 1) bmAx -= astep * Adx;

    E2 = (A.transpose() * y.asDiagonal() * A).inverse();
    Matrix Q = A * E2 * A.transpose();
    Vector h = Q.diagonal().cwiseSqrt();
    if (iter == 1) {
      const double t = bmAx.cwiseQuotient(h).minCoeff();
      y /= t * t;
      h *= t;
      z = (bmAx - h).cwiseMax(0.1);
      Q *= t * t;
    }

    const Vector yz = y.cwiseProduct(z);
    const Vector yh = y.cwiseProduct(h);
    const double gap = yz.sum() / static_cast<double>(m);
    const double rmu = std::max(std::min(0.5, gap) * gap, opt.min_mu);

    const Vector R1 = -A.transpose() * yh;
    const Vector R2 = bmAx - h - z;
    const Vector R3 = Vector::Constant(m, rmu) - yz;
    res = std::max({R1.lpNorm<Eigen::Infinity>(), R2.lpNorm<Eigen::Infinity>(), R3.lpNorm<Eigen::Infinity>()});
    objval = 0.5 * std::log(E2.determinant());
    if (!std::isfinite(objval) || !std::isfinite(res))
      throw NumericalError("max_volume_ellipsoid: non-finite iterate");

    if (res < opt.tol * (1.0 + bnrm) && rmu <= opt.min_mu) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(E2);
      RoundingTransform out{es.operatorSqrt(), x + x0};
      // The interior-point iterate satisfies containment only up to its
      // residual; shrink by the worst ratio so the ellipsoid is inside H.
      const Vector room = H.b() - H.A() * out.eps;
      if (room.minCoeff() <= 0.0) throw NumericalError("max_volume_ellipsoid: center left the polytope");
      const double worst = (H.A() * out.E).rowwise().norm().cwiseQuotient(room).maxCoeff();
      if (worst > 1.0) out.E /= worst;
      if (report) *report = {iter, res, out.log_det()};
      return out;
    }

    const Matrix YQ = y.asDiagonal() * Q;
    Matrix G = YQ.cwiseProduct(YQ.transpose());
    const Vector y2h = 2.0 * yh;
    const Matrix YA = y.asDiagonal() * A;
    G.diagonal() += y2h.cwiseProduct(z).cwiseMax(1e-12);
    const Eigen::PartialPivLU<Matrix> Glu(G);
    const Matrix T = Glu.solve((h + z).asDiagonal() * YA);
    const Matrix ATP = (y2h.asDiagonal() * T - YA).transpose();

    const Vector R3Dy = R3.cwiseQuotient(y);
    const Vector R23 = R2 - R3Dy;
    dx = (ATP * A).partialPivLu().solve(R1 + ATP * R23);
    Adx = A * dx;
    const Vector dyDy = Glu.solve(y2h.cwiseProduct(Adx - R23));
    const Vector dy = y.cwiseProduct(dyDy);
    const Vector dz = R3Dy - z.cwiseProduct(dyDy);

    const double ax = -1.0 / std::min(-0.5, (-Adx.cwiseQuotient(bmAx)).minCoeff());
    const double ay = -1.0 / std::min(-0.5, dyDy.minCoeff());
    const double az = -1.0 / std::min(-0.5, dz.cwiseQuotient(z).minCoeff());
    const double tau = std::min(opt.step_fraction, std::max(opt.tau0, 1.0 - res));
    astep = tau * std::min({1.0, ax, ay, az});

    x += astep * dx;
    y += astep * dy;
    z += astep * dz;
  }
  std::ostringstream msg;
  msg << "max_volume_ellipsoid: no convergence after " << opt.max_iter << " iterations (residual " << res
      << ", log det " << objval << ")";
  throw ConvergenceError(msg.str());
}

/// Smallest slack b_i - ||E a_i|| - a_i.eps over all rows (>= 0 means contained).
inline double ellipsoid_containment_slack(const HPolytope& H, const RoundingTransform& r) {
  return (H.b() - (H.A() * r.E).rowwise().norm() - H.A() * r.eps).minCoeff();
}

}  // namespace polyflow

#endif  // POLYFLOW_MVE_HPP
