// Monotone rational-quadratic splines (Durkan et al., "Neural Spline Flows")
// and their circular variant on [-pi, pi].

#ifndef POLYFLOW_SPLINE_HPP
#define POLYFLOW_SPLINE_HPP

#include "polyflow/core.hpp"

#include <algorithm>
#include <utility>

namespace polyflow {

inline constexpr int kDefaultSplineBins = 30;

struct SplineValue {
  double value = 0.0;
  double log_deriv = 0.0;
};

class RQSpline {
 public:
  RQSpline() = default;

  /// Knots (x_k, y_k), k = 0..B, strictly increasing with equal endpoints,
  /// and positive derivatives at every knot.
  RQSpline(Vector knots_x, Vector knots_y, Vector derivs)
      : x_(std::move(knots_x)), y_(std::move(knots_y)), d_(std::move(derivs)) {
    require(x_.size() >= 2 && y_.size() == x_.size() && d_.size() == x_.size(),
            "RQSpline: knots and derivatives must all have B+1 entries");
    for (Index k = 0; k + 1 < x_.size(); ++k) {
      if (!(x_(k + 1) > x_(k)) || !(y_(k + 1) > y_(k)))
        throw DomainError("RQSpline: knots must be strictly increasing");
    }
    if (!(d_.array() > 0.0).all()) throw DomainError("RQSpline: derivatives must be positive");
    if (std::abs(x_(0) - y_(0)) > 1e-12 * (1.0 + std::abs(x_(0))) ||
        std::abs(x_(x_.size() - 1) - y_(y_.size() - 1)) > 1e-12 * (1.0 + std::abs(x_(x_.size() - 1))))
      throw DomainError("RQSpline: endpoints must map to themselves");
  }

  static RQSpline identity(double lo, double hi, int bins = kDefaultSplineBins) {
    const Vector k = Vector::LinSpaced(bins + 1, lo, hi);
    return RQSpline(k, k, Vector::Ones(bins + 1));
  }

  /// Softmax widths/heights and softplus derivatives, as produced by a
  /// conditioner network. min_bin and min_deriv keep every bin non-degenerate.
  static RQSpline from_unnormalized(const Eigen::Ref<const Vector>& widths, const Eigen::Ref<const Vector>& heights,
                                    const Eigen::Ref<const Vector>& derivs, double lo, double hi,
                                    double min_bin = 1e-3, double min_deriv = 1e-3) {
    const Index B = widths.size();
    require(B >= 1 && heights.size() == B && derivs.size() == B + 1, "RQSpline: parameter sizes must be B, B, B+1");
    require(min_bin * static_cast<double>(B) < 1.0, "RQSpline: min_bin too large for the number of bins");
    auto knots = [&](const Eigen::Ref<const Vector>& raw) {
      const Vector p = (raw.array() - log_sum_exp(raw)).exp().matrix();
      const Vector w = min_bin + (1.0 - min_bin * static_cast<double>(B)) * p.array();
      Vector k(B + 1);
      k(0) = lo;
      for (Index i = 0; i < B; ++i) k(i + 1) = k(i) + (hi - lo) * w(i);
      k(B) = hi;
      return k;
    };
    Vector d(B + 1);
    for (Index i = 0; i <= B; ++i) {
      const double z = derivs(i);
      d(i) = min_deriv + (z > 30.0 ? z : std::log1p(std::exp(z)));
    }
    return RQSpline(knots(widths), knots(heights), d);
  }

  Index bins() const { return x_.size() - 1; }
  double lo() const { return x_(0); }
  double hi() const { return x_(x_.size() - 1); }
  const Vector& knots_x() const { return x_; }
  const Vector& knots_y() const { return y_; }
  const Vector& derivs() const { return d_; }

  SplineValue forward(double x) const {
    if (!(x >= lo() && x <= hi())) throw DomainError("RQSpline::forward: input outside [lo, hi]");
    const Index k = bin(x_, x);
    const double w = x_(k + 1) - x_(k);
    const double h = y_(k + 1) - y_(k);
    const double s = h / w;
    const double xi = (x - x_(k)) / w;
    const double om = xi * (1.0 - xi);
    const double den = s + (d_(k + 1) + d_(k) - 2.0 * s) * om;
    const double y = y_(k) + h * (s * xi * xi + d_(k) * om) / den;
    const double num = s * s * (d_(k + 1) * xi * xi + 2.0 * s * om + d_(k) * (1.0 - xi) * (1.0 - xi));
    return {y, std::log(num) - 2.0 * std::log(den)};
  }

  /// Returns x and log dx/dy.
  SplineValue inverse(double y) const {
    if (!(y >= lo() && y <= hi())) throw DomainError("RQSpline::inverse: input outside [lo, hi]");
    const Index k = bin(y_, y);
    const double w = x_(k + 1) - x_(k);
    const double h = y_(k + 1) - y_(k);
    const double s = h / w;
    const double dy = y - y_(k);
    const double sum = d_(k + 1) + d_(k) - 2.0 * s;
    const double a = h * (s - d_(k)) + dy * sum;
    const double b = h * d_(k) - dy * sum;
    const double c = -s * dy;
    const double disc = std::max(0.0, b * b - 4.0 * a * c);
    const double xi = std::clamp(2.0 * c / (-b - std::sqrt(disc)), 0.0, 1.0);
    const double x = x_(k) + xi * w;
    return {x, -forward(x).log_deriv};
  }

 private:
  static Index bin(const Vector& knots, double t) {
    const double* begin = knots.data();
    const double* end = begin + knots.size();
    Index k = static_cast<Index>(std::upper_bound(begin, end, t) - begin) - 1;
    return std::clamp<Index>(k, 0, knots.size() - 2);
  }

  Vector x_, y_, d_;
};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double theta) {
  double t = std::remainder(theta, 2.0 * kPi);
  if (t <= -kPi) t += 2.0 * kPi;
  return t;
}

/// RQ spline on [-pi, pi] whose end derivatives agree, followed by a rotation.
/// The derivative is continuous across the seam, so the map is a smooth
/// diffeomorphism of the circle.
class CircularSpline {
 public:
  CircularSpline() : spline_(RQSpline::identity(-kPi, kPi)) {}

  CircularSpline(RQSpline spline, double offset = 0.0) : spline_(std::move(spline)), offset_(offset) {
    if (std::abs(spline_.lo() + kPi) > 1e-12 || std::abs(spline_.hi() - kPi) > 1e-12)
      throw DomainError("CircularSpline: knots must span [-pi, pi]");
    const Vector& d = spline_.derivs();
    if (std::abs(d(0) - d(d.size() - 1)) > 1e-12 * d(0))
      throw DomainError("CircularSpline: boundary derivatives must match");
  }

  /// B raw widths, B raw heights and B raw derivatives; the last knot reuses
  /// the first derivative.
  static CircularSpline from_unnormalized(const Eigen::Ref<const Vector>& widths,
                                          const Eigen::Ref<const Vector>& heights,
                                          const Eigen::Ref<const Vector>& derivs, double offset = 0.0) {
    const Index B = widths.size();
    require(derivs.size() == B, "CircularSpline: need one derivative per bin");
    Vector d(B + 1);
    d.head(B) = derivs;
    d(B) = derivs(0);
    return CircularSpline(RQSpline::from_unnormalized(widths, heights, d, -kPi, kPi), offset);
  }

  const RQSpline& spline() const { return spline_; }
  double offset() const { return offset_; }

  SplineValue forward(double theta) const {
    double t = wrap_angle(theta);
    if (t >= kPi) t = -kPi;
    const SplineValue v = spline_.forward(t);
    return {wrap_angle(v.value + offset_), v.log_deriv};
  }

  SplineValue inverse(double theta) const {
    double t = wrap_angle(theta - offset_);
    if (t >= kPi) t = -kPi;
    const SplineValue v = spline_.inverse(t);
    return {wrap_angle(v.value), v.log_deriv};
  }

 private:
  RQSpline spline_;
  double offset_ = 0.0;
};

}  // namespace polyflow

#endif  // POLYFLOW_SPLINE_HPP
