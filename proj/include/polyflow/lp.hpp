// Dense two-phase primal simplex with Bland's rule.
//
// Solves  max/min c'x  s.t.  A x <= b  over free variables x. Sized for the
// desk-scale problems in this library (tens of variables, a few hundred rows);
// every pivot touches the full tableau.

#ifndef POLYFLOW_LP_HPP
#define POLYFLOW_LP_HPP

#include "polyflow/core.hpp"
#include "polyflow/polytope.hpp"

#include <vector>

namespace polyflow {

enum class LPStatus { Optimal, Infeasible, Unbounded };

inline const char* to_string(LPStatus s) {
  switch (s) {
    case LPStatus::Optimal: return "optimal";
    case LPStatus::Infeasible: return "infeasible";
    case LPStatus::Unbounded: return "unbounded";
  }
  return "?";
}

struct LPSolution {
  LPStatus status = LPStatus::Infeasible;
  Vector x;
  double objective = 0.0;

  bool optimal() const { return status == LPStatus::Optimal; }
};

struct LPOptions {
  double feasibility_tol = 1e-9;  // on normalized constraint residuals
  double pivot_tol = 1e-11;
  double cost_tol = 1e-11;
  long max_pivots = 100000;
};

namespace detail {

class SimplexTableau {
 public:
  // Row i of the tableau: [coefficients (n_cols) | rhs]. Last row: reduced costs | -objective.
  SimplexTableau(const Matrix& A, const Vector& b, const LPOptions& opt) : opt_(opt) {
    const Index m = A.rows();
    n_ = A.cols();
    Index n_art = 0;
    for (Index i = 0; i < m; ++i)
      if (b(i) < 0.0) ++n_art;
    n_struct_ = 2 * n_ + m;
    n_cols_ = n_struct_ + n_art;
    T_ = Matrix::Zero(m + 1, n_cols_ + 1);
    basis_.assign(static_cast<std::size_t>(m), 0);
    Index art = n_struct_;
    for (Index i = 0; i < m; ++i) {
      const double sign = b(i) < 0.0 ? -1.0 : 1.0;
      T_.row(i).head(n_) = sign * A.row(i);
      T_.row(i).segment(n_, n_) = -sign * A.row(i);
      T_(i, 2 * n_ + i) = sign;
      T_(i, n_cols_) = sign * b(i);
      if (sign < 0.0) {
        T_(i, art) = 1.0;
        basis_[static_cast<std::size_t>(i)] = art++;
      } else {
        basis_[static_cast<std::size_t>(i)] = 2 * n_ + i;
      }
    }
  }

  // Minimizes cost' y over the current basis; returns false if unbounded.
  bool minimize(const Vector& cost, Index eligible_cols) {
    const Index m = rows();
    T_.row(m).setZero();
    T_.row(m).head(cost.size()) = cost.transpose();
    for (Index i = 0; i < m; ++i) {
      const double cb = basis_cost(cost, basis_[static_cast<std::size_t>(i)]);
      if (cb != 0.0) T_.row(m) -= cb * T_.row(i);
    }
    while (true) {
      Index enter = -1;
      for (Index j = 0; j < eligible_cols; ++j) {
        if (T_(m, j) < -opt_.cost_tol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      Index leave = -1;
      double best = kInf;
      for (Index i = 0; i < m; ++i) {
        const double a = T_(i, enter);
        if (a > opt_.pivot_tol) {
          const double ratio = T_(i, n_cols_) / a;
          const double eps = 1e-12 * (1.0 + std::abs(ratio));
          if (leave < 0 || ratio < best - eps) {
            best = ratio;
            leave = i;
          } else if (ratio <= best + eps &&
                     basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)]) {
            best = std::min(best, ratio);
            leave = i;
          }
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
  }

  void pivot(Index r, Index c) {
    if (++pivots_ > opt_.max_pivots)
      throw NumericalError("solve_lp: exceeded " + std::to_string(opt_.max_pivots) + " pivots");
    T_.row(r) /= T_(r, c);
    for (Index i = 0; i < T_.rows(); ++i) {
      if (i != r) {
        const double f = T_(i, c);
        if (f != 0.0) T_.row(i) -= f * T_.row(r);
      }
    }
    basis_[static_cast<std::size_t>(r)] = c;
  }

  // After phase one: pivot artificial variables out of the basis, dropping
  // rows that are linearly dependent.
  void drive_out_artificials() {
    for (Index i = 0; i < rows(); ++i) {
      if (basis_[static_cast<std::size_t>(i)] < n_struct_) continue;
      Index col = -1;
      double best = opt_.pivot_tol * 1e3;
      for (Index j = 0; j < n_struct_; ++j) {
        if (std::abs(T_(i, j)) > best) {
          best = std::abs(T_(i, j));
          col = j;
        }
      }
      if (col >= 0) {
        pivot(i, col);
      } else {
        remove_row(i);
        --i;
      }
    }
  }

  Vector solution() const {
    Vector y = Vector::Zero(n_cols_);
    for (Index i = 0; i < rows(); ++i) y(basis_[static_cast<std::size_t>(i)]) = T_(i, n_cols_);
    return y.head(n_) - y.segment(n_, n_);
  }

  double phase_one_infeasibility() const {
    double s = 0.0;
    for (Index i = 0; i < rows(); ++i)
      if (basis_[static_cast<std::size_t>(i)] >= n_struct_) s += T_(i, n_cols_);
    return s;
  }

  Index rows() const { return T_.rows() - 1; }
  Index n_struct() const { return n_struct_; }
  Index n_cols() const { return n_cols_; }
  Index n() const { return n_; }

 private:
  static double basis_cost(const Vector& cost, Index j) { return j < cost.size() ? cost(j) : 0.0; }

  void remove_row(Index r) {
    const Index last = T_.rows() - 1;
    Matrix T(T_.rows() - 1, T_.cols());
    T.topRows(r) = T_.topRows(r);
    T.bottomRows(last - r) = T_.bottomRows(last - r);
    T_ = std::move(T);
    basis_.erase(basis_.begin() + r);
  }

  LPOptions opt_;
  Matrix T_;
  std::vector<Index> basis_;
  Index n_ = 0, n_struct_ = 0, n_cols_ = 0;
  long pivots_ = 0;
};

}  // namespace detail

/// Optimizes c'x over {A x <= b}. Rows are normalized internally.
inline LPSolution solve_lp(const Eigen::Ref<const Vector>& c, const Eigen::Ref<const Matrix>& A,
                           const Eigen::Ref<const Vector>& b, bool maximize = true, const LPOptions& opt = {}) {
  require(A.rows() == b.size(), "solve_lp: A and b disagree");
  require(c.size() == A.cols(), "solve_lp: objective has wrong length");
  if (!c.allFinite()) throw DomainError("solve_lp: non-finite objective");

  const Vector norms = A.rowwise().norm().cwiseMax(kMinRowNorm);
  const Matrix An = norms.asDiagonal().inverse() * A;
  const Vector bn = b.cwiseQuotient(norms);
  const Index n = A.cols();

  detail::SimplexTableau tab(An, bn, opt);
  LPSolution out;
  out.x = Vector::Zero(n);

  if (tab.n_cols() > tab.n_struct()) {
    Vector phase1 = Vector::Zero(tab.n_cols());
    phase1.tail(tab.n_cols() - tab.n_struct()).setOnes();
    tab.minimize(phase1, tab.n_cols());
    if (tab.phase_one_infeasibility() > opt.feasibility_tol * (1.0 + bn.lpNorm<Eigen::Infinity>())) {
      out.status = LPStatus::Infeasible;
      return out;
    }
    tab.drive_out_artificials();
  }

  Vector cost = Vector::Zero(tab.n_struct());
  const double sign = maximize ? -1.0 : 1.0;
  cost.head(n) = sign * c;
  cost.segment(n, n) = -sign * c;
  if (!tab.minimize(cost, tab.n_struct())) {
    out.status = LPStatus::Unbounded;
    out.objective = maximize ? kInf : -kInf;
    return out;
  }
  out.status = LPStatus::Optimal;
  out.x = tab.solution();
  out.objective = c.dot(out.x);

  const double viol = A.rows() > 0 ? (An * out.x - bn).maxCoeff() : 0.0;
  if (viol > 1e3 * opt.feasibility_tol * (1.0 + out.x.lpNorm<Eigen::Infinity>()))
    throw NumericalError("solve_lp: optimal vertex violates constraints by " + std::to_string(viol));
  return out;
}

inline LPSolution solve_lp(const Eigen::Ref<const Vector>& c, const HPolytope& H, bool maximize = true,
                           const LPOptions& opt = {}) {
  return solve_lp(c, H.A(), H.b(), maximize, opt);
}

/// Any point with A x <= b (status Infeasible if there is none).
inline LPSolution feasible_point(const HPolytope& H, const LPOptions& opt = {}) {
  return solve_lp(Vector::Zero(H.dim()), H, true, opt);
}

inline void require_nonempty(const HPolytope& H, const LPOptions& opt = {}) {
  if (!feasible_point(H, opt).optimal()) throw InfeasibleError("polytope is empty");
}

}  // namespace polyflow

#endif  // POLYFLOW_LP_HPP
