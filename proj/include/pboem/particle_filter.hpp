#ifndef PBOEM_PARTICLE_FILTER_HPP
#define PBOEM_PARTICLE_FILTER_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pboem/math.hpp"
#include "pboem/model.hpp"
#include "pboem/rng.hpp"

namespace pboem {

/// Raised when every particle weight collapses to zero; carries the block and
/// in-block time of the failure. The run is aborted rather than silently
/// reset, so the block statistic is never built from a corrupted system.
class DegenerateSystemError : public std::runtime_error {
 public:
  DegenerateSystemError(std::string what, long block, long t)
      : std::runtime_error(std::move(what) + " (block " +
                           std::to_string(block) + ", t " + std::to_string(t) +
                           ")"),
        block_(block),
        t_(t) {}

  long block() const { return block_; }
  long t() const { return t_; }

 private:
  long block_;
  long t_;
};

/// N weighted particles approximating the filtering distribution at one time
/// step. log_weights are the raw importance weights in log space; each step
/// rebuilds them from single-step densities (the previous weights enter
/// through resampling), so they never accumulate multiplicatively. Consumers
/// normalize via weights().
template <class State>
struct ParticleSystem {
  std::vector<State> particles;
  std::vector<double> log_weights;
  std::vector<std::size_t> ancestors;
  long t = 0;

  std::size_t size() const { return particles.size(); }

  /// Max-shift normalized linear weights, summing to 1.
  std::vector<double> weights() const {
    std::vector<double> w(log_weights.size());
    double m = neg_inf;
    for (double lw : log_weights) m = std::max(m, lw);
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = std::exp(log_weights[i] - m);
      total += w[i];
    }
    for (double& x : w) x /= total;
    return w;
  }
};

/// Auxiliary-filter proposal: instrumental kernel iota plus adjustment
/// multiplier vartheta (in log space). `adjustment_bound` is the declared sup
/// of vartheta. `bootstrap` marks the vartheta == 1, iota == m_theta case, in
/// which the importance weight reduces exactly to the emission density.
template <class State, class Obs>
struct InstrumentalKernel {
  std::function<State(Rng&, const State&, const Obs&)> sample;
  std::function<double(const State&, const State&, const Obs&)> log_density;
  std::function<double(const State&, const Obs&)> log_adjustment;
  double adjustment_bound = 1.0;
  bool bootstrap = false;
};

/// Bootstrap filter: propose from the model transition, unit adjustment.
template <class State, class Obs>
InstrumentalKernel<State, Obs> make_bootstrap_kernel(
    const ModelSpec<State, Obs>& model, const Parameter& theta) {
  InstrumentalKernel<State, Obs> k;
  k.sample = [&model, theta](Rng& rng, const State& x, const Obs& y) {
    return model.sample_transition(rng, theta, x, y);
  };
  k.log_density = [&model, theta](const State& x, const State& xn,
                                  const Obs& y) {
    return model.log_transition(theta, x, xn, y);
  };
  k.log_adjustment = [](const State&, const Obs&) { return 0.0; };
  k.adjustment_bound = 1.0;
  k.bootstrap = true;
  return k;
}

/// N i.i.d. draws from chi, uniform weights, t = 0.
template <class State, class Obs>
ParticleSystem<State> init_particles(const ModelSpec<State, Obs>& model,
                                     const Parameter& theta, std::size_t n,
                                     Rng& rng) {
  if (n == 0) throw std::invalid_argument("init_particles: n must be >= 1");
  ParticleSystem<State> ps;
  ps.particles.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    ps.particles.push_back(model.sample_initial(rng, theta));
  ps.log_weights.assign(n, -std::log(static_cast<double>(n)));
  ps.ancestors.resize(n);
  for (std::size_t i = 0; i < n; ++i) ps.ancestors[i] = i;
  ps.t = 0;
  return ps;
}

/// Joint multinomial draw of (ancestor, proposal) pairs from the instrumental
/// distribution proportional to w_i * vartheta(xi_i) * iota(xi_i, dx).
/// Draws are consumed in particle-index order.
template <class State, class Obs>
std::pair<std::vector<std::size_t>, std::vector<State>> propagate(
    const ParticleSystem<State>& ps, const InstrumentalKernel<State, Obs>& kernel,
    const Obs& y, Rng& rng) {
  const std::size_t n = ps.size();
  std::vector<double> adjusted(n);
  double shift = neg_inf;
  for (std::size_t i = 0; i < n; ++i) {
    adjusted[i] =
        ps.log_weights[i] + kernel.log_adjustment(ps.particles[i], y);
    shift = std::max(shift, adjusted[i]);
  }
  std::vector<double> cdf(n);
  double acc = 0.0;
  if (shift != neg_inf) {
    for (std::size_t i = 0; i < n; ++i) {
      acc += std::exp(adjusted[i] - shift);
      cdf[i] = acc;
    }
  }
  if (!(acc > 0.0))
    throw DegenerateSystemError("propagate: all adjusted weights are zero", -1,
                                ps.t);
  std::vector<std::size_t> ancestors(n);
  std::vector<State> proposed;
  proposed.reserve(n);
  for (std::size_t l = 0; l < n; ++l) {
    const std::size_t j = rng.categorical_from_cdf(cdf);
    ancestors[l] = j;
    proposed.push_back(kernel.sample(rng, ps.particles[j], y));
  }
  return {std::move(ancestors), std::move(proposed)};
}

/// Importance weights omega = m * g / (vartheta * iota), stored raw in log
/// space. In the bootstrap case the transition and proposal terms cancel and
/// are skipped, so log omega == log g holds bit-for-bit.
template <class State, class Obs>
ParticleSystem<State> reweight(const ModelSpec<State, Obs>& model,
                               const Parameter& theta,
                               const InstrumentalKernel<State, Obs>& kernel,
                               const ParticleSystem<State>& prev,
                               const std::vector<std::size_t>& ancestors,
                               std::vector<State> proposed, const Obs& y) {
  const std::size_t n = proposed.size();
  ParticleSystem<State> out;
  out.log_weights.resize(n);
  for (std::size_t l = 0; l < n; ++l) {
    double lw = model.log_emission(theta, proposed[l], y);
    if (!kernel.bootstrap) {
      // In the bootstrap case vartheta == 1 and iota == m_theta, so these
      // terms cancel exactly; skipping them keeps log g bit-for-bit.
      const State& xa = prev.particles[ancestors[l]];
      lw += model.log_transition(theta, xa, proposed[l], y) -
            kernel.log_adjustment(xa, y) -
            kernel.log_density(xa, proposed[l], y);
    }
    if (std::isnan(lw))
      throw std::invalid_argument(
          "reweight: NaN weight (proposal does not dominate the target)");
    out.log_weights[l] = lw;
  }
  if (log_sum_exp(out.log_weights) == neg_inf)
    throw DegenerateSystemError("reweight: all weights are zero", -1,
                                prev.t + 1);
  out.particles = std::move(proposed);
  out.ancestors = ancestors;
  out.t = prev.t + 1;
  return out;
}

/// Effective sample size (sum w)^2 / sum w^2 on normalized weights; in [1, N].
template <class State>
double effective_sample_size(const ParticleSystem<State>& ps) {
  const std::vector<double> w = ps.weights();
  double s1 = 0.0, s2 = 0.0;
  for (double x : w) {
    s1 += x;
    s2 += x * x;
  }
  return s1 * s1 / s2;
}

}  // namespace pboem

#endif  // PBOEM_PARTICLE_FILTER_HPP
