// Constraint simplification by linear programming: redundancy removal and
// detection of equalities hidden in the inequality system.

#ifndef POLYFLOW_CONSTRAINTS_HPP
#define POLYFLOW_CONSTRAINTS_HPP

#include "polyflow/lp.hpp"
#include "polyflow/polytope.hpp"

#include <vector>

namespace polyflow {

inline constexpr double kDefaultConstraintTol = 1e-9;

/// Drops rows implied by the remaining ones. Rows are visited in order; row i
/// is removed when max a_i.v over the other kept rows does not exceed b_i + tol
/// (residuals measured on unit-norm rows). Of a set of duplicates, the last
/// copy survives.
inline HPolytope remove_redundant(const HPolytope& H, double tol = kDefaultConstraintTol) {
  const HPolytope N = H.normalized();
  std::vector<Index> keep;
  for (Index i = 0; i < H.rows(); ++i) keep.push_back(i);

  for (Index i = 0; i < H.rows(); ++i) {
    std::vector<Index> others;
    others.reserve(keep.size());
    for (Index j : keep)
      if (j != i) others.push_back(j);
    if (others.empty()) break;
    const HPolytope rest = N.select_rows(others);
    const LPSolution sol = solve_lp(N.A().row(i).transpose(), rest, true);
    if (sol.status == LPStatus::Infeasible) throw InfeasibleError("remove_redundant: polytope is empty");
    if (sol.optimal() && sol.objective <= N.b()(i) + tol) keep = std::move(others);
  }
  return H.select_rows(keep);
}

struct ImplicitEqualities {
  Matrix S_plus;       // equality rows (original scale)
  Vector h_plus;
  HPolytope residual;  // the rows that remain genuine inequalities
};

/// Moves every row that is tight on all of H (min a_i.v >= b_i - tol on
/// unit-norm rows) into S+. Explicit equalities stored as row pairs +-a are detected the
/// same way; duplicate or opposite rows enter S+ only once.
inline ImplicitEqualities find_implicit_equalities(const HPolytope& H, double tol = kDefaultConstraintTol) {
  const HPolytope N = H.normalized();
  std::vector<Index> eq_rows, ineq_rows;
  std::vector<Vector> eq_dirs;
  std::vector<double> eq_vals;
  for (Index i = 0; i < H.rows(); ++i) {
    const Vector a = N.A().row(i).transpose();
    const LPSolution lo = solve_lp(a, N, false);
    if (lo.status == LPStatus::Infeasible) throw InfeasibleError("find_implicit_equalities: polytope is empty");
    if (!lo.optimal() || lo.objective < N.b()(i) - tol) {
      ineq_rows.push_back(i);
      continue;
    }
    bool duplicate = false;
    for (std::size_t k = 0; k < eq_dirs.size(); ++k) {
      if ((eq_dirs[k] - a).norm() < 1e-9 && std::abs(eq_vals[k] - N.b()(i)) < 1e-7) duplicate = true;
      if ((eq_dirs[k] + a).norm() < 1e-9 && std::abs(eq_vals[k] + N.b()(i)) < 1e-7) duplicate = true;
    }
    if (!duplicate) {
      eq_rows.push_back(i);
      eq_dirs.push_back(a);
      eq_vals.push_back(N.b()(i));
    }
  }
  if (ineq_rows.empty()) throw DomainError("find_implicit_equalities: polytope is a single point");

  ImplicitEqualities out{Matrix(static_cast<Index>(eq_rows.size()), H.dim()),
                         Vector(static_cast<Index>(eq_rows.size())), H.select_rows(ineq_rows)};
  for (std::size_t k = 0; k < eq_rows.size(); ++k) {
    out.S_plus.row(static_cast<Index>(k)) = H.A().row(eq_rows[k]);
    out.h_plus(static_cast<Index>(k)) = H.b()(eq_rows[k]);
  }
  return out;
}

}  // namespace polyflow

#endif  // POLYFLOW_CONSTRAINTS_HPP
