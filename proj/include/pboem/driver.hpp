#ifndef PBOEM_DRIVER_HPP
#define PBOEM_DRIVER_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pboem/model.hpp"
#include "pboem/particle_filter.hpp"
#include "pboem/rng.hpp"
#include "pboem/schedule.hpp"
#include "pboem/smoother.hpp"

namespace pboem {

/// Thrown by an observation source that has run dry.
class StreamExhausted : public std::runtime_error {
 public:
  StreamExhausted() : std::runtime_error("observation stream exhausted") {}
};

/// Thrown by `run` when the stream ends mid-block.
class TruncationError : public std::runtime_error {
 public:
  explicit TruncationError(std::size_t completed_blocks)
      : std::runtime_error("observation stream exhausted after " +
                           std::to_string(completed_blocks) +
                           " completed blocks"),
        completed_blocks_(completed_blocks) {}
  std::size_t completed_blocks() const { return completed_blocks_; }

 private:
  std::size_t completed_blocks_;
};

/// Current estimates and the running tau-weighted average statistic
/// Sigma_tilde (zero at n = 0). Sigma_tilde only aggregates blocks processed
/// while averaging is active: starting the average late must exclude the
/// early transient, or wild warm-up statistics contaminate it forever.
struct EstimatorState {
  Parameter theta;
  std::vector<double> sigma_tilde;
  Parameter theta_tilde;
  std::size_t n = 0;
  std::size_t T = 0;      // T_n
  std::size_t T_avg = 0;  // observations aggregated into sigma_tilde
  bool averaging_active = false;
  std::size_t projection_events = 0;
  std::size_t clip_events = 0;
};

template <class State, class Obs>
EstimatorState make_estimator_state(const ModelSpec<State, Obs>& model,
                                    Parameter theta0) {
  EstimatorState st;
  st.theta = theta0;
  st.theta_tilde = std::move(theta0);
  st.sigma_tilde.assign(model.d_stat, 0.0);
  return st;
}

struct TraceRecord {
  std::size_t n = 0;      // block index (after update)
  std::size_t T_n = 0;    // observations consumed so far
  std::size_t tau_n = 0;  // length of the block just processed
  std::size_t N_n = 0;    // particles used in that block
  std::vector<double> theta;
  std::vector<double> theta_tilde;
};

struct RunOptions {
  std::size_t averaging_start = 25;  // block index at which averaging begins
  bool carry_filter = false;  // init each block from the previous filter
  bool strict_domain = false; // abort instead of projecting s outside S
  std::function<void(const std::string&)> log;  // optional event sink
};

/// One block of the forward SMC smoother with theta frozen: init -> for each
/// of tau observations {propagate, reweight, update_statistics} -> finalize.
/// Observations are pulled one at a time and never retained. `init` overrides
/// the chi initialization (carry-filter mode). `step_observer`, when set, is
/// called with each post-reweight particle system.
template <class State, class Obs>
SufficientStatistic run_block(
    const ModelSpec<State, Obs>& model, const Parameter& theta,
    const InstrumentalKernel<State, Obs>& kernel,
    const std::function<Obs()>& next_observation, std::size_t tau,
    std::size_t n_particles, Rng& rng, long block_index = -1,
    const ParticleSystem<State>* init = nullptr,
    const std::function<void(const ParticleSystem<State>&)>& step_observer = {},
    ParticleSystem<State>* final_system = nullptr) {
  if (tau == 0) throw std::invalid_argument("run_block: tau must be >= 1");
  ParticleSystem<State> ps;
  if (init) {
    ps = *init;
    ps.t = 0;
  } else {
    ps = init_particles(model, theta, n_particles, rng);
  }
  SmoothedStatistics R = SmoothedStatistics::zero(ps.size(), model.d_stat);
  try {
    for (std::size_t t = 1; t <= tau; ++t) {
      const Obs y = next_observation();
      auto [ancestors, proposed] = propagate(ps, kernel, y, rng);
      ParticleSystem<State> next =
          reweight(model, theta, kernel, ps, ancestors, std::move(proposed), y);
      SmoothedStatistics next_R =
          update_statistics(ps, R, next, model, theta, y);
      ps = std::move(next);
      R = std::move(next_R);
      if (step_observer) step_observer(ps);
    }
  } catch (const DegenerateSystemError& e) {
    throw DegenerateSystemError(e.what(), block_index, e.t());
  }
  SufficientStatistic s = finalize_block_statistic(model, ps, R);
  if (final_system) *final_system = std::move(ps);
  return s;
}

/// P-BOEM update: theta_{n+1} = theta_bar(s_tilde) and, once averaging is
/// active, Sigma_tilde_{n+1} = (T'_n / T'_{n+1}) Sigma_tilde_n +
/// (tau_{n+1} / T'_{n+1}) s_tilde with T' counting averaged blocks only.
/// Statistics outside the model's domain are projected back (logged) unless
/// strict mode is requested.
template <class State, class Obs>
void pboem_update(EstimatorState& state, const ModelSpec<State, Obs>& model,
                  SufficientStatistic s_tilde, std::size_t tau_next,
                  const RunOptions& opts = {}) {
  if (!model.stat_in_domain(s_tilde)) {
    if (opts.strict_domain)
      throw std::domain_error("pboem_update: statistic outside domain");
    s_tilde = model.project_stat(s_tilde);
    ++state.projection_events;
    if (opts.log)
      opts.log("block " + std::to_string(state.n + 1) +
               ": statistic projected onto its domain");
  }
  bool clipped = false;
  state.theta = model.m_step(s_tilde, &clipped);
  if (clipped) {
    ++state.clip_events;
    if (opts.log)
      opts.log("block " + std::to_string(state.n + 1) +
               ": M-step output clipped to the feasible box");
  }
  state.T += tau_next;
  ++state.n;
  if (state.averaging_active) {
    const auto T_next = static_cast<double>(state.T_avg + tau_next);
    const double w_old = static_cast<double>(state.T_avg) / T_next;
    const double w_new = static_cast<double>(tau_next) / T_next;
    for (std::size_t i = 0; i < state.sigma_tilde.size(); ++i)
      state.sigma_tilde[i] = w_old * state.sigma_tilde[i] + w_new * s_tilde[i];
    state.T_avg += tau_next;
    SufficientStatistic sigma{state.sigma_tilde};
    if (!model.stat_in_domain(sigma)) {
      sigma = model.project_stat(sigma);
      ++state.projection_events;
    }
    state.theta_tilde = model.m_step(sigma);
  } else {
    state.theta_tilde = state.theta;
  }
}

/// Pluggable block E-step; the SMC path is the default, exact oracles can be
/// substituted for reference runs. Receives (theta, block observations pull
/// function, tau, N, rng, block index).
template <class State, class Obs>
using BlockEStep = std::function<SufficientStatistic(
    const Parameter&, const std::function<Obs()>&, std::size_t, std::size_t,
    Rng&, std::size_t)>;

/// Full P-BOEM / averaged P-BOEM run. Observations are consumed in a single
/// scan; one RNG stream per block, derived from (master_seed, replication,
/// block). Returns the trace (theta_0 first).
template <class State, class Obs>
std::vector<TraceRecord> run(const ModelSpec<State, Obs>& model,
                             const BlockSchedule& schedule,
                             const Parameter& theta0,
                             const std::function<Obs()>& source,
                             std::uint64_t master_seed,
                             std::uint64_t replication,
                             const RunOptions& opts = {},
                             const BlockEStep<State, Obs>& e_step = {}) {
  schedule.validate();
  EstimatorState state = make_estimator_state(model, theta0);
  std::vector<TraceRecord> trace;
  trace.push_back({0, 0, 0, 0, theta0.value, theta0.value});

  std::optional<ParticleSystem<State>> carried;
  for (std::size_t n = 1; n <= schedule.n_blocks; ++n) {
    const std::size_t tau = schedule.tau(n);
    const std::size_t N = schedule.N(n);
    Rng rng(derive_seed(master_seed, replication, n));
    state.averaging_active = n > opts.averaging_start;
    SufficientStatistic s_tilde{};
    try {
      if (e_step) {
        s_tilde = e_step(state.theta, source, tau, N, rng, n);
      } else {
        auto kernel = make_bootstrap_kernel(model, state.theta);
        ParticleSystem<State> final_ps;
        s_tilde = run_block(model, state.theta, kernel, source, tau, N, rng,
                            static_cast<long>(n),
                            opts.carry_filter && carried ? &*carried : nullptr,
                            {}, &final_ps);
        if (opts.carry_filter) carried = std::move(final_ps);
      }
    } catch (const StreamExhausted&) {
      throw TruncationError(n - 1);
    }
    pboem_update(state, model, std::move(s_tilde), tau, opts);
    trace.push_back({n, state.T, tau, N, state.theta.value,
                     state.theta_tilde.value});
  }
  return trace;
}

}  // namespace pboem

#endif  // PBOEM_DRIVER_HPP
