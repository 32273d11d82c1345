#ifndef PBOEM_MODEL_HPP
#define PBOEM_MODEL_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pboem/math.hpp"
#include "pboem/rng.hpp"

namespace pboem {

/// Parameter vector constrained to the model's feasible box. Construct via
/// ModelSpec::make_parameter so out-of-box values are rejected.
struct Parameter {
  std::vector<double> value;

  double operator[](std::size_t i) const { return value[i]; }
  std::size_t size() const { return value.size(); }
};

/// Sufficient statistic vector; entries must stay finite. Domain membership
/// is checked by the owning model's predicate.
struct SufficientStatistic {
  std::vector<double> value;

  double operator[](std::size_t i) const { return value[i]; }
  std::size_t size() const { return value.size(); }
};

/// Contract for a curved-exponential-family hidden Markov model: a transition
/// log-density, an emission log-density, one statistic map S and one closed
/// form M-step map. The observation type carries everything that is
/// time-varying (for SLAM it includes the control inputs), so evaluators that
/// formally depend on the time step receive the current observation.
///
/// All callables must be pure; instances are immutable after construction and
/// safe to share across concurrent replications.
template <class State, class Obs>
struct ModelSpec {
  using state_type = State;
  using obs_type = Obs;

  std::size_t d_theta = 0;
  std::size_t d_stat = 0;

  // Feasible box for theta; the M-step clips to it.
  std::vector<double> theta_lower;
  std::vector<double> theta_upper;

  // Initial distribution chi (may depend on the current parameter).
  std::function<State(Rng&, const Parameter&)> sample_initial;
  std::function<double(const Parameter&, const State&)> log_initial;

  // Transition kernel m_theta: log-density and sampler. The observation of
  // the step being entered is passed along for time-varying transitions.
  std::function<double(const Parameter&, const State&, const State&,
                       const Obs&)>
      log_transition;
  std::function<State(Rng&, const Parameter&, const State&, const Obs&)>
      sample_transition;

  // Emission kernel g_theta: log-density, plus a sampler for simulation.
  std::function<double(const Parameter&, const State&, const Obs&)>
      log_emission;
  std::function<Obs(Rng&, const Parameter&, const State&)> sample_emission;

  // Statistic S(x, x', y), written into out (size d_stat).
  std::function<void(const State&, const State&, const Obs&,
                     std::span<double>)>
      statistic;

  // Closed-form maximizer of log_normalizer + <s, natural_param>; throws
  // std::domain_error naming the violated constraint when s is outside the
  // statistic domain.
  std::function<std::vector<double>(const SufficientStatistic&)> m_step_raw;

  // Statistic domain membership and projection back into it (used by the
  // driver when Monte Carlo noise pushes a block statistic outside).
  std::function<bool(const SufficientStatistic&)> stat_in_domain;
  std::function<SufficientStatistic(const SufficientStatistic&)> project_stat;

  // Optional exponential-family decomposition, used by diagnostics:
  //   log m + log g = log_normalizer(theta) + <S, natural_param(theta)>
  //                   + log_offset(x, x', y)
  // where log_offset is independent of theta.
  std::function<double(const Parameter&)> log_normalizer;
  std::function<void(const Parameter&, std::span<double>)> natural_param;
  std::function<double(const State&, const State&, const Obs&)> log_offset;

  // > 0 marks a finite state space with State convertible to an index in
  // [0, n_states); enables the grouped forward-smoother recursion.
  std::size_t n_states = 0;

  bool has_exponential_decomposition() const {
    return static_cast<bool>(log_normalizer) &&
           static_cast<bool>(natural_param);
  }

  Parameter make_parameter(std::vector<double> v) const {
    if (v.size() != d_theta)
      throw std::invalid_argument("parameter dimension mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!(v[i] >= theta_lower[i] && v[i] <= theta_upper[i]))
        throw std::invalid_argument("parameter outside feasible box at index " +
                                    std::to_string(i));
    }
    return Parameter{std::move(v)};
  }

  SufficientStatistic make_statistic(std::vector<double> v) const {
    if (v.size() != d_stat)
      throw std::invalid_argument("statistic dimension mismatch");
    if (!all_finite(v))
      throw std::invalid_argument("statistic has non-finite entries");
    return SufficientStatistic{std::move(v)};
  }

  /// M-step with box clipping. Returns the clipped maximizer and reports via
  /// `clipped` (when non-null) whether any coordinate was moved.
  Parameter m_step(const SufficientStatistic& s, bool* clipped = nullptr) const {
    if (!all_finite(s.value))
      throw std::domain_error("m_step: statistic has non-finite entries");
    std::vector<double> v = m_step_raw(s);
    bool any = false;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] < theta_lower[i]) {
        v[i] = theta_lower[i];
        any = true;
      } else if (v[i] > theta_upper[i]) {
        v[i] = theta_upper[i];
        any = true;
      }
    }
    if (clipped) *clipped = any;
    return Parameter{std::move(v)};
  }

  /// log m_theta(x, x') + log g_theta(x', y); the complete-data increment.
  double log_joint_increment(const Parameter& theta, const State& x,
                             const State& x_next, const Obs& y) const {
    const double lm = log_transition(theta, x, x_next, y);
    const double lg = log_emission(theta, x_next, y);
    if (std::isnan(lm) || std::isnan(lg))
      throw std::invalid_argument("log_joint_increment: NaN density");
    return lm + lg;
  }

  /// phi(theta) + <s, psi(theta)>; the objective the M-step maximizes.
  double m_step_objective(const Parameter& theta,
                          const SufficientStatistic& s) const {
    std::vector<double> psi(d_stat);
    natural_param(theta, psi);
    double obj = log_normalizer(theta);
    for (std::size_t i = 0; i < d_stat; ++i) obj += s[i] * psi[i];
    return obj;
  }
};

}  // namespace pboem

#endif  // PBOEM_MODEL_HPP
