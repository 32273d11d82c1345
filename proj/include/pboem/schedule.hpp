#ifndef PBOEM_SCHEDULE_HPP
#define PBOEM_SCHEDULE_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace pboem {

/// Deterministic block-size and particle-count schedules:
///   tau_n = floor(c_tau * n^a),  T_n = sum_{k<=n} tau_k,
///   N_n   = floor(c_N * tau_n^d)   (or a constant when constant_N > 0).
/// Floors are clamped to 1. The rate-optimal regime requires
/// d >= (a+1)/(2a); when requested and violated, a warning flag is raised
/// instead of an error.
struct BlockSchedule {
  double c_tau = 1.0;
  double a = 1.2;
  double c_N = 1.0;
  double d = 1.0;
  std::size_t n_blocks = 0;
  std::size_t constant_N = 0;  // > 0: N_n is constant, ignoring c_N/d

  void validate(bool rate_optimal = false, bool* warn = nullptr) const {
    if (!(a > 1.0))
      throw std::invalid_argument("BlockSchedule: a must be > 1");
    if (!(c_tau > 0.0))
      throw std::invalid_argument("BlockSchedule: c_tau must be > 0");
    if (constant_N == 0 && !(c_N > 0.0))
      throw std::invalid_argument("BlockSchedule: c_N must be > 0");
    if (rate_optimal && warn) *warn = d < (a + 1.0) / (2.0 * a);
  }

  /// Block length tau_n, n >= 1.
  std::size_t tau(std::size_t n) const {
    const double v = std::floor(c_tau * std::pow(static_cast<double>(n), a));
    return v < 1.0 ? 1 : static_cast<std::size_t>(v);
  }

  /// Cumulative update time T_n = sum_{k<=n} tau_k, with T_0 = 0.
  std::size_t T(std::size_t n) const {
    std::size_t acc = 0;
    for (std::size_t k = 1; k <= n; ++k) acc += tau(k);
    return acc;
  }

  /// Particle count N_n.
  std::size_t N(std::size_t n) const {
    if (constant_N > 0) return constant_N;
    const double v =
        std::floor(c_N * std::pow(static_cast<double>(tau(n)), d));
    return v < 1.0 ? 1 : static_cast<std::size_t>(v);
  }
};

}  // namespace pboem

#endif  // PBOEM_SCHEDULE_HPP
