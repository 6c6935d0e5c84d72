// Polytope descriptions: the canonical model (S v = h, A_c v <= b_c),
// the half-space representation and the vertex representation.

#ifndef POLYFLOW_POLYTOPE_HPP
#define POLYFLOW_POLYTOPE_HPP

#include "polyflow/core.hpp"

#include <string>
#include <utility>
#include <vector>

namespace polyflow {

/// Rows with a smaller norm are rejected as ill-posed.
inline constexpr double kMinRowNorm = 1e-12;

/// Equality and inequality constraints over R named variables.
struct CanonicalModel {
  Matrix S;                                 // M x R
  Vector h;                                 // M
  Matrix A_c;                               // C x R
  Vector b_c;                               // C
  std::vector<std::string> variable_names;  // R

  Index num_variables() const { return static_cast<Index>(variable_names.size()); }

  /// Throws DimensionError if shapes disagree or a right-hand side is not finite.
  void validate() const {
    const Index r = num_variables();
    require(r > 0, "CanonicalModel: no variables");
    require(S.cols() == r || S.rows() == 0, "CanonicalModel: S has " + std::to_string(S.cols()) +
                                                " columns, expected " + std::to_string(r));
    require(A_c.cols() == r || A_c.rows() == 0, "CanonicalModel: A_c has " + std::to_string(A_c.cols()) +
                                                    " columns, expected " + std::to_string(r));
    require(S.rows() == h.size(), "CanonicalModel: S rows and h length differ");
    require(A_c.rows() == b_c.size(), "CanonicalModel: A_c rows and b_c length differ");
    require(S.allFinite() && A_c.allFinite(), "CanonicalModel: non-finite matrix entry");
    require(h.allFinite() && b_c.allFinite(), "CanonicalModel: bounds must be finite");
  }

  /// Appends lo <= v_i <= hi as two inequality rows per variable.
  void add_bounds(const std::vector<std::pair<double, double>>& bounds) {
    const Index r = num_variables();
    require(static_cast<Index>(bounds.size()) == r, "CanonicalModel: one [lo, hi] pair per variable expected");
    const Index c0 = A_c.rows();
    Matrix A(c0 + 2 * r, r);
    Vector b(c0 + 2 * r);
    if (c0 > 0) {
      A.topRows(c0) = A_c;
      b.head(c0) = b_c;
    }
    for (Index i = 0; i < r; ++i) {
      const auto [lo, hi] = bounds[static_cast<std::size_t>(i)];
      require(std::isfinite(lo) && std::isfinite(hi), "CanonicalModel: bounds must be finite");
      require(lo <= hi, "CanonicalModel: lower bound exceeds upper bound for " + variable_names[i]);
      A.row(c0 + 2 * i).setZero();
      A(c0 + 2 * i, i) = 1.0;
      b(c0 + 2 * i) = hi;
      A.row(c0 + 2 * i + 1).setZero();
      A(c0 + 2 * i + 1, i) = -1.0;
      b(c0 + 2 * i + 1) = -lo;
    }
    A_c = std::move(A);
    b_c = std::move(b);
  }
};

/// { v : A v <= b }.
class HPolytope {
 public:
  HPolytope() = default;

  HPolytope(Matrix A, Vector b) : A_(std::move(A)), b_(std::move(b)) {
    require(A_.rows() == b_.size(), "HPolytope: A has " + std::to_string(A_.rows()) + " rows but b has " +
                                        std::to_string(b_.size()) + " entries");
    require(A_.cols() > 0, "HPolytope: dimension must be positive");
    require(A_.allFinite() && b_.allFinite(), "HPolytope: non-finite entries");
    for (Index i = 0; i < A_.rows(); ++i) {
      if (A_.row(i).norm() < kMinRowNorm)
        throw DomainError("HPolytope: row " + std::to_string(i) + " is (numerically) zero");
    }
  }

  const Matrix& A() const { return A_; }
  const Vector& b() const { return b_; }
  Index dim() const { return A_.cols(); }
  Index rows() const { return A_.rows(); }

  /// b - A v.
  Vector slack(const Eigen::Ref<const Vector>& v) const { return b_ - A_ * v; }

  bool contains(const Eigen::Ref<const Vector>& v, double tol = 1e-9) const {
    return (A_ * v - b_).maxCoeff() <= tol;
  }
  bool strictly_contains(const Eigen::Ref<const Vector>& v, double margin = 0.0) const {
    return (b_ - A_ * v).minCoeff() > margin;
  }

  /// Keeps the listed rows, in the given order.
  HPolytope select_rows(const std::vector<Index>& keep) const {
    Matrix A(static_cast<Index>(keep.size()), dim());
    Vector b(static_cast<Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
      A.row(static_cast<Index>(k)) = A_.row(keep[k]);
      b(static_cast<Index>(k)) = b_(keep[k]);
    }
    return HPolytope(std::move(A), std::move(b));
  }

  /// Rows rescaled to unit norm; the feasible set is unchanged.
  HPolytope normalized() const {
    const Vector norms = A_.rowwise().norm();
    return HPolytope(norms.asDiagonal().inverse() * A_, b_.cwiseQuotient(norms));
  }

 private:
  Matrix A_;
  Vector b_;
};

/// conv(columns of V).
class VPolytope {
 public:
  VPolytope() = default;
  explicit VPolytope(Matrix V) : V_(std::move(V)) {
    require(V_.rows() > 0, "VPolytope: dimension must be positive");
    require(V_.cols() >= V_.rows() + 1, "VPolytope: a full-dimensional polytope needs at least dim+1 vertices");
    require(V_.allFinite(), "VPolytope: non-finite vertex");
  }

  const Matrix& V() const { return V_; }
  Index dim() const { return V_.rows(); }
  Index num_vertices() const { return V_.cols(); }
  Vector centroid() const { return V_.rowwise().mean(); }

 private:
  Matrix V_;
};

/// A = [S; -S; A_c], b = [h; -h; b_c].
inline HPolytope canonicalize(const CanonicalModel& model) {
  model.validate();
  const Index m = model.S.rows();
  const Index c = model.A_c.rows();
  const Index r = model.num_variables();
  require(2 * m + c > 0, "canonicalize: model has no constraints");
  Matrix A(2 * m + c, r);
  Vector b(2 * m + c);
  if (m > 0) {
    A.topRows(m) = model.S;
    A.middleRows(m, m) = -model.S;
    b.head(m) = model.h;
    b.segment(m, m) = -model.h;
  }
  if (c > 0) {
    A.bottomRows(c) = model.A_c;
    b.tail(c) = model.b_c;
  }
  return HPolytope(std::move(A), std::move(b));
}

/// Brute-force vertex enumeration over all dim-subsets of facets.
/// Combinatorial cost; meant for small dimensions and test oracles.
inline Matrix enumerate_vertices(const HPolytope& H, double tol = 1e-9) {
  const Index k = H.dim();
  const Index m = H.rows();
  require(m >= k, "enumerate_vertices: fewer rows than dimensions");
  const HPolytope N = H.normalized();
  std::vector<Vector> found;
  std::vector<Index> idx(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
  Matrix Asub(k, k);
  Vector bsub(k);
  while (true) {
    for (Index i = 0; i < k; ++i) {
      Asub.row(i) = N.A().row(idx[static_cast<std::size_t>(i)]);
      bsub(i) = N.b()(idx[static_cast<std::size_t>(i)]);
    }
    Eigen::FullPivLU<Matrix> lu(Asub);
    lu.setThreshold(1e-10);
    if (lu.isInvertible()) {
      const Vector x = lu.solve(bsub);
      if (N.contains(x, tol)) {
        bool dup = false;
        for (const auto& v : found) {
          if ((v - x).lpNorm<Eigen::Infinity>() <= 1e3 * tol * (1.0 + x.lpNorm<Eigen::Infinity>())) {
            dup = true;
            break;
          }
        }
        if (!dup) found.push_back(x);
      }
    }
    // next combination
    Index pos = k - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == m - k + pos) --pos;
    if (pos < 0) break;
    ++idx[static_cast<std::size_t>(pos)];
    for (Index j = pos + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
  Matrix V(k, static_cast<Index>(found.size()));
  for (std::size_t j = 0; j < found.size(); ++j) V.col(static_cast<Index>(j)) = found[j];
  return V;
}

}  // namespace polyflow

#endif  // POLYFLOW_POLYTOPE_HPP
