// Common Eigen aliases and the exception hierarchy used across polyflow.

#ifndef POLYFLOW_CORE_HPP
#define POLYFLOW_CORE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace polyflow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.14159265358979323846;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent matrix/vector shapes or malformed inputs.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A point or argument outside the domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Empty feasible set or inconsistent constraint system.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Unbounded feasible set where boundedness is required.
class UnboundedError : public Error {
 public:
  using Error::Error;
};

/// An iterative method failed to reach its tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Point on a measure-zero set where a map is not differentiable
/// (facet ties along a chord, cylinder poles).
class NonDifferentiableError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or other numerical breakdown.
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw DimensionError(message);
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

/// log(sum(exp(x))) without overflow.
inline double log_sum_exp(const Eigen::Ref<const Vector>& x) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum());
}

}  // namespace polyflow

#endif  // POLYFLOW_CORE_HPP
