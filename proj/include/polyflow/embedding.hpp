// Chebyshev center and affine embeddings v' = T v + tau of a polytope into the
// free-variable space of its equality system.

#ifndef POLYFLOW_EMBEDDING_HPP
#define POLYFLOW_EMBEDDING_HPP

#include "polyflow/lp.hpp"
#include "polyflow/polytope.hpp"

#include <string>
#include <utility>
#include <vector>

namespace polyflow {

struct ChebyshevBall {
  Vector center;
  double radius = 0.0;
};

/// Largest inscribed ball: max r s.t. a_i.v + r ||a_i|| <= b_i, r >= 0.
/// Optional equality rows (S v = h) restrict the center to an affine subspace;
/// the ball radius is then measured in the full space and serves only to push
/// the center into the relative interior.
inline ChebyshevBall chebyshev_center(const HPolytope& H, const Matrix& S_eq = Matrix(),
                                      const Vector& h_eq = Vector()) {
  const Index n = H.dim();
  const Index m = H.rows();
  const Index me = S_eq.rows();
  require(me == 0 || S_eq.cols() == n, "chebyshev_center: equality block has wrong width");
  Matrix A = Matrix::Zero(m + 2 * me + 1, n + 1);
  Vector b = Vector::Zero(m + 2 * me + 1);
  A.topLeftCorner(m, n) = H.A();
  A.col(n).head(m) = H.A().rowwise().norm();
  b.head(m) = H.b();
  if (me > 0) {
    A.block(m, 0, me, n) = S_eq;
    A.block(m + me, 0, me, n) = -S_eq;
    b.segment(m, me) = h_eq;
    b.segment(m + me, me) = -h_eq;
  }
  A(m + 2 * me, n) = -1.0;  // r >= 0
  Vector c = Vector::Zero(n + 1);
  c(n) = 1.0;
  const LPSolution sol = solve_lp(c, A, b, true);
  if (sol.status == LPStatus::Unbounded) throw UnboundedError("chebyshev_center: polytope is not bounded");
  if (sol.status == LPStatus::Infeasible) throw InfeasibleError("chebyshev_center: polytope is empty");
  ChebyshevBall out{sol.x.head(n), std::max(0.0, sol.x(n))};
  if (out.radius < 1e-12) out.radius = 0.0;
  return out;
}

enum class EmbeddingKind { RREF, SVD };

inline const char* to_string(EmbeddingKind k) { return k == EmbeddingKind::RREF ? "rref" : "svd"; }

/// Original point = T * free + tau.
struct AffineEmbedding {
  Matrix T;  // R x K
  Vector tau;
  EmbeddingKind kind = EmbeddingKind::RREF;
  std::vector<std::string> free_names;
  std::vector<Index> free_indices;  // RREF only: original column of each free variable

  Index full_dim() const { return T.rows(); }
  Index free_dim() const { return T.cols(); }
  Vector apply(const Eigen::Ref<const Vector>& free) const { return T * free + tau; }
};

/// Reduced row echelon form of [S | h] with partial pivoting. Columns are
/// visited in their original order, so pivot (dependent) columns are the
/// earliest possible and the free variables are the remaining ones.
inline AffineEmbedding rref_embedding(const Matrix& S_plus, const Vector& h_plus, const Vector& center,
                                      const std::vector<std::string>& names = {}, double pivot_tol = 1e-10) {
  const Index R = center.size();
  require(S_plus.rows() == h_plus.size(), "rref_embedding: S+ and h+ disagree");
  require(S_plus.rows() == 0 || S_plus.cols() == R, "rref_embedding: S+ width differs from center");
  require(names.empty() || static_cast<Index>(names.size()) == R, "rref_embedding: wrong number of names");

  Matrix M(S_plus.rows(), R + 1);
  if (S_plus.rows() > 0) {
    M.leftCols(R) = S_plus;
    M.col(R) = h_plus;
  }
  std::vector<Index> pivot_cols;
  Index row = 0;
  for (Index col = 0; col < R && row < M.rows(); ++col) {
    const double scale = std::max(1.0, M.col(col).lpNorm<Eigen::Infinity>());
    Index best;
    const double piv = M.col(col).segment(row, M.rows() - row).cwiseAbs().maxCoeff(&best);
    if (piv <= pivot_tol * scale) {
      M.col(col).segment(row, M.rows() - row).setZero();
      continue;
    }
    best += row;
    M.row(row).swap(M.row(best));
    M.row(row) /= M(row, col);
    for (Index i = 0; i < M.rows(); ++i)
      if (i != row && M(i, col) != 0.0) M.row(i) -= M(i, col) * M.row(row);
    pivot_cols.push_back(col);
    ++row;
  }
  for (Index i = row; i < M.rows(); ++i) {
    if (std::abs(M(i, R)) > 1e-8 * std::max(1.0, h_plus.lpNorm<Eigen::Infinity>()))
      throw InfeasibleError("rref_embedding: inconsistent equality system");
  }

  std::vector<bool> is_pivot(static_cast<std::size_t>(R), false);
  for (Index c : pivot_cols) is_pivot[static_cast<std::size_t>(c)] = true;
  AffineEmbedding emb;
  emb.kind = EmbeddingKind::RREF;
  for (Index c = 0; c < R; ++c)
    if (!is_pivot[static_cast<std::size_t>(c)]) emb.free_indices.push_back(c);
  const Index K = static_cast<Index>(emb.free_indices.size());
  emb.T = Matrix::Zero(R, K);
  for (Index k = 0; k < K; ++k) emb.T(emb.free_indices[static_cast<std::size_t>(k)], k) = 1.0;
  for (std::size_t r = 0; r < pivot_cols.size(); ++r) {
    for (Index k = 0; k < K; ++k)
      emb.T(pivot_cols[r], k) = -M(static_cast<Index>(r), emb.free_indices[static_cast<std::size_t>(k)]);
  }
  Vector center_free(K);
  for (Index k = 0; k < K; ++k) center_free(k) = center(emb.free_indices[static_cast<std::size_t>(k)]);
  emb.tau = center - emb.T * center_free;
  for (Index k = 0; k < K; ++k) {
    const Index c = emb.free_indices[static_cast<std::size_t>(k)];
    emb.free_names.push_back(names.empty() ? "v" + std::to_string(c) : names[static_cast<std::size_t>(c)]);
  }
  return emb;
}

/// Orthonormal null-space basis of S+ from its SVD; tau is the center itself.
/// Singular values below rel_threshold * sigma_max count as zero. A value
/// within a factor of 10 of the threshold makes the rank ambiguous; pass
/// explicit_dim >= 0 to override.
inline AffineEmbedding svd_embedding(const Matrix& S_plus, const Vector& center, Index explicit_dim = -1,
                                     double rel_threshold = 1e-10) {
  const Index R = center.size();
  require(S_plus.rows() == 0 || S_plus.cols() == R, "svd_embedding: S+ width differs from center");
  AffineEmbedding emb;
  emb.kind = EmbeddingKind::SVD;
  emb.tau = center;
  if (S_plus.rows() == 0) {
    emb.T = Matrix::Identity(R, R);
  } else {
    Eigen::JacobiSVD<Matrix> svd(S_plus, Eigen::ComputeFullV);
    const Vector& sv = svd.singularValues();
    const double smax = sv.size() > 0 ? sv(0) : 0.0;
    Index rank = 0;
    for (Index i = 0; i < sv.size(); ++i) {
      const double rel = smax > 0.0 ? sv(i) / smax : 0.0;
      if (explicit_dim < 0 && rel > 0.1 * rel_threshold && rel < 10.0 * rel_threshold)
        throw NumericalError("svd_embedding: singular value " + std::to_string(sv(i)) +
                             " is too close to the rank threshold; pass the dimension explicitly");
      if (rel >= rel_threshold) ++rank;
    }
    const Index K = explicit_dim >= 0 ? explicit_dim : R - rank;
    require(K >= 0 && K <= R, "svd_embedding: invalid dimension");
    emb.T = svd.matrixV().rightCols(K);
  }
  for (Index k = 0; k < emb.T.cols(); ++k) emb.free_names.push_back("svd" + std::to_string(k));
  return emb;
}

/// A' = A T, b' = b - A tau. Rows that vanish under T (equalities absorbed
/// by the embedding) are dropped.
inline HPolytope project_to_full_dim(const HPolytope& H, const AffineEmbedding& emb, double zero_tol = 1e-10) {
  require(H.dim() == emb.full_dim(), "project_to_full_dim: embedding does not match polytope dimension");
  const Matrix A = H.A() * emb.T;
  const Vector b = H.b() - H.A() * emb.tau;
  std::vector<Index> keep;
  for (Index i = 0; i < A.rows(); ++i)
    if (A.row(i).norm() > zero_tol * std::max(1.0, H.A().row(i).norm())) keep.push_back(i);
  Matrix Ak(static_cast<Index>(keep.size()), A.cols());
  Vector bk(static_cast<Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    Ak.row(static_cast<Index>(k)) = A.row(keep[k]);
    bk(static_cast<Index>(k)) = b(keep[k]);
  }
  return HPolytope(std::move(Ak), std::move(bk));
}

}  // namespace polyflow

#endif  // POLYFLOW_EMBEDDING_HPP
