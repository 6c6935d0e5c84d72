// Counter-based random streams.
//
// Every stream is identified by (master seed, stream id). Draw n of a stream is
// a pure function of (key, n), so chains and pipeline stages are reproducible
// independently of scheduling order. The mixing function is SplitMix64.

#ifndef POLYFLOW_RANDOM_HPP
#define POLYFLOW_RANDOM_HPP

#include "polyflow/core.hpp"

#include <cstdint>
#include <string_view>

namespace polyflow {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// FNV-1a, used to turn substream names into stream ids.
inline constexpr std::uint64_t hash_name(std::string_view name) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept
      : key_(splitmix64(splitmix64(seed) ^ (stream * 0xD1342543DE82EF95ULL + 0x2545F4914F6CDD1DULL))) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept { return splitmix64(key_ + 0x9E3779B97F4A7C15ULL * counter_++); }

  /// Child stream; independent of how many draws the parent has made.
  RandomStream substream(std::uint64_t id) const noexcept {
    RandomStream child;
    child.key_ = splitmix64(key_ ^ splitmix64(id + 0x632BE59BD9B4E019ULL));
    return child;
  }
  RandomStream substream(std::string_view name) const noexcept { return substream(hash_name(name)); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() noexcept {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one variate per call, no cached state).
  double normal() noexcept {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  Vector normal_vector(Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

  /// +1 or -1 with equal probability.
  double rademacher() noexcept { return ((*this)() >> 63) ? 1.0 : -1.0; }

  /// Index i with probability w[i]; w must sum to one.
  Index categorical(const Eigen::Ref<const Vector>& w) noexcept {
    const double u = uniform();
    double cum = 0.0;
    for (Index i = 0; i < w.size(); ++i) {
      cum += w(i);
      if (u < cum) return i;
    }
    return w.size() - 1;
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// Uniform direction on the unit sphere S^{dim-1}.
inline Vector random_direction(RandomStream& rng, Index dim) {
  Vector s = rng.normal_vector(dim);
  double n = s.norm();
  while (n == 0.0) {
    s = rng.normal_vector(dim);
    n = s.norm();
  }
  return s / n;
}

/// Uniform point in the ball of the given radius.
inline Vector random_in_ball(RandomStream& rng, Index dim, double radius = 1.0) {
  Vector s = random_direction(rng, dim);
  return s * (radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim)));
}

}  // namespace polyflow

#endif  // POLYFLOW_RANDOM_HPP
