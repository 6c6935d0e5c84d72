// John-position rounding and the composite map between original variables
// and rounded variables:  original = T (E v + eps) + tau.

#ifndef POLYFLOW_TRANSFORM_CHAIN_HPP
#define POLYFLOW_TRANSFORM_CHAIN_HPP

#include "polyflow/constraints.hpp"
#include "polyflow/embedding.hpp"
#include "polyflow/mve.hpp"
#include "polyflow/polytope.hpp"

#include <string>
#include <vector>

namespace polyflow {

struct TransformChain {
  AffineEmbedding embedding;
  RoundingTransform rounding;
  HPolytope john;  // { v : A v <= b } with the unit ball inscribed
  std::vector<std::string> original_names;

  Index dim() const { return john.dim(); }
  Index original_dim() const { return embedding.full_dim(); }

  /// Names of the rounded coordinates: free-variable names with an "R_" prefix.
  std::vector<std::string> rounded_names() const {
    std::vector<std::string> out;
    for (const auto& n : embedding.free_names) out.push_back("R_" + n);
    return out;
  }

  /// Inscribed radius min_i b_i / ||a_i||; 1 in John position.
  double inscribed_radius() const { return john.b().cwiseQuotient(john.A().rowwise().norm()).minCoeff(); }
};

/// A = A' E, b = b' - A' eps.
inline TransformChain john_polytope(const HPolytope& H, const RoundingTransform& r, const AffineEmbedding& emb = {}) {
  require(r.E.rows() == H.dim() && r.E.cols() == H.dim(), "john_polytope: E does not match polytope dimension");
  TransformChain chain;
  chain.embedding = emb;
  if (chain.embedding.T.size() == 0) {
    chain.embedding.T = Matrix::Identity(H.dim(), H.dim());
    chain.embedding.tau = Vector::Zero(H.dim());
    for (Index k = 0; k < H.dim(); ++k) chain.embedding.free_names.push_back("x" + std::to_string(k));
  }
  chain.rounding = r;
  chain.john = HPolytope(H.A() * r.E, H.b() - H.A() * r.eps);
  return chain;
}

/// Rounded coordinates -> original coordinates.
inline Vector lift(const Eigen::Ref<const Vector>& v, const TransformChain& chain) {
  require(v.size() == chain.dim(), "lift: wrong dimension");
  return chain.embedding.T * (chain.rounding.E * v + chain.rounding.eps) + chain.embedding.tau;
}

/// Original coordinates -> rounded coordinates. Throws DomainError if the
/// point is off the affine hull by more than tol.
inline Vector unlift(const Eigen::Ref<const Vector>& original, const TransformChain& chain, double tol = 1e-6) {
  require(original.size() == chain.original_dim(), "unlift: wrong dimension");
  const Matrix& T = chain.embedding.T;
  const Vector rhs = original - chain.embedding.tau;
  const Vector free = T.colPivHouseholderQr().solve(rhs);
  const double resid = (T * free - rhs).lpNorm<Eigen::Infinity>();
  if (resid > tol * std::max(1.0, original.lpNorm<Eigen::Infinity>()))
    throw DomainError("unlift: point is off the polytope's affine hull (residual " + std::to_string(resid) + ")");
  return chain.rounding.E.llt().solve(free - chain.rounding.eps);
}

inline Matrix lift_batch(const Matrix& V, const TransformChain& chain) {
  Matrix out = chain.embedding.T * ((chain.rounding.E * V).colwise() + chain.rounding.eps);
  out.colwise() += chain.embedding.tau;
  return out;
}

struct RoundingOptions {
  EmbeddingKind embedding = EmbeddingKind::RREF;
  double constraint_tol = kDefaultConstraintTol;
  MveOptions mve;
};

/// Full pipeline: canonicalize -> implicit equalities -> embedding ->
/// full-dimensional polytope -> redundancy removal -> MVE -> John polytope.
inline TransformChain round_model(const CanonicalModel& model, const RoundingOptions& opt = {}) {
  const HPolytope H = canonicalize(model);
  const ImplicitEqualities eq = find_implicit_equalities(H, opt.constraint_tol);
  const ChebyshevBall ball = chebyshev_center(eq.residual, eq.S_plus, eq.h_plus);
  const AffineEmbedding emb = opt.embedding == EmbeddingKind::RREF
                                  ? rref_embedding(eq.S_plus, eq.h_plus, ball.center, model.variable_names)
                                  : svd_embedding(eq.S_plus, ball.center);
  if (emb.free_dim() == 0) throw DomainError("round_model: polytope is a single point");
  const HPolytope full = remove_redundant(project_to_full_dim(eq.residual, emb), opt.constraint_tol);
  const RoundingTransform r = max_volume_ellipsoid(full, opt.mve);
  TransformChain chain = john_polytope(full, r, emb);
  chain.original_names = model.variable_names;
  return chain;
}

/// Rounds an already full-dimensional polytope (identity embedding).
inline TransformChain round_polytope(const HPolytope& H, const RoundingOptions& opt = {}) {
  const HPolytope full = remove_redundant(H, opt.constraint_tol);
  return john_polytope(full, max_volume_ellipsoid(full, opt.mve));
}

}  // namespace polyflow

#endif  // POLYFLOW_TRANSFORM_CHAIN_HPP
