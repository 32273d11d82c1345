#ifndef PBOEM_RNG_HPP
#define PBOEM_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace pboem {

namespace detail {
// SplitMix64 finalizer, used to mix stream labels into seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d4a2ca528eb2abULL;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Counter-mode stream derivation: the stream for (replication, block) under a
/// master seed is seed = mix(mix(mix(master) ^ rep) ^ block). Deterministic
/// and independent of thread scheduling.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replication,
                                 std::uint64_t block = 0) {
  std::uint64_t s = detail::splitmix64(master);
  s = detail::splitmix64(s ^ replication);
  s = detail::splitmix64(s ^ block);
  return s;
}

/// Random stream with portable output: distributions are implemented here
/// (not via std::*_distribution) so sequences are identical across standard
/// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (no state, one draw per call pair).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Index in [0, n).
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n == 0");
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  /// Draw from a categorical distribution given cumulative weights
  /// (last entry is the total mass).
  std::size_t categorical_from_cdf(std::span<const double> cdf) {
    const double u = uniform() * cdf.back();
    std::size_t lo = 0, hi = cdf.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cdf[mid] <= u) lo = mid + 1;
      else hi = mid;
    }
    return lo;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pboem

#endif  // PBOEM_RNG_HPP
