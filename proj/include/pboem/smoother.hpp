#ifndef PBOEM_SMOOTHER_HPP
#define PBOEM_SMOOTHER_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "pboem/math.hpp"
#include "pboem/model.hpp"
#include "pboem/particle_filter.hpp"

namespace pboem {

/// Per-particle running smoothed statistics R_t (N vectors of dimension d),
/// stored row-major. At t = 0 all rows are zero.
struct SmoothedStatistics {
  std::vector<double> data;  // n * d, row-major
  std::size_t n = 0;
  std::size_t d = 0;
  long t = 0;

  static SmoothedStatistics zero(std::size_t n, std::size_t d) {
    SmoothedStatistics r;
    r.data.assign(n * d, 0.0);
    r.n = n;
    r.d = d;
    r.t = 0;
    return r;
  }

  std::span<double> row(std::size_t l) { return {data.data() + l * d, d}; }
  std::span<const double> row(std::size_t l) const {
    return {data.data() + l * d, d};
  }
};

template <class State, class Obs>
void detail_update_grouped(const ParticleSystem<State>&,
                           const SmoothedStatistics&,
                           const ParticleSystem<State>&,
                           const ModelSpec<State, Obs>&, const Parameter&,
                           const Obs&, SmoothedStatistics&);

/// One forward smoothing update:
///   R_t^l = (1/t) sum_j w_j^l [ S(xi_{t-1}^j, xi_t^l, y) + (t-1) R_{t-1}^j ]
/// with backward weights w_j^l proportional to omega_{t-1}^j m(xi_{t-1}^j,
/// xi_t^l), normalized over j. The denominator is accumulated in log-sum-exp
/// form. Cost O(N^2 d).
///
/// For finite state spaces (model.n_states > 0, integer states) an
/// algebraically identical grouped recursion is used: particles sharing a
/// state value contribute through per-state totals, reducing the cost to
/// O(N K d) per step.
template <class State, class Obs>
SmoothedStatistics update_statistics(const ParticleSystem<State>& prev_ps,
                                     const SmoothedStatistics& prev_R,
                                     const ParticleSystem<State>& new_ps,
                                     const ModelSpec<State, Obs>& model,
                                     const Parameter& theta, const Obs& y) {
  if (prev_R.t != prev_ps.t)
    throw std::invalid_argument("update_statistics: R/particle time mismatch");
  if (new_ps.t != prev_ps.t + 1)
    throw std::invalid_argument("update_statistics: particle systems are not consecutive");
  const std::size_t n_prev = prev_ps.size();
  const std::size_t n_new = new_ps.size();
  const std::size_t d = model.d_stat;
  const auto t = static_cast<double>(new_ps.t);

  SmoothedStatistics out = SmoothedStatistics::zero(n_new, d);
  out.t = new_ps.t;

  if constexpr (std::is_integral_v<State>) {
    if (model.n_states > 0) {
      detail_update_grouped(prev_ps, prev_R, new_ps, model, theta, y, out);
      return out;
    }
  }

  std::vector<double> log_bw(n_prev);   // log omega_{t-1}^j + log m(j, l)
  std::vector<double> s_buf(d);
  for (std::size_t l = 0; l < n_new; ++l) {
    const State& xl = new_ps.particles[l];
    double shift = neg_inf;
    for (std::size_t j = 0; j < n_prev; ++j) {
      log_bw[j] = prev_ps.log_weights[j] +
                  model.log_transition(theta, prev_ps.particles[j], xl, y);
      shift = std::max(shift, log_bw[j]);
    }
    if (shift == neg_inf)
      throw DegenerateSystemError(
          "update_statistics: degenerate backward kernel", -1, new_ps.t);
    double denom = 0.0;
    for (std::size_t j = 0; j < n_prev; ++j) denom += std::exp(log_bw[j] - shift);

    auto r_out = out.row(l);
    for (std::size_t j = 0; j < n_prev; ++j) {
      const double w = std::exp(log_bw[j] - shift) / denom;
      if (w == 0.0) continue;
      model.statistic(prev_ps.particles[j], xl, y, s_buf);
      axpy(w / t, s_buf, r_out);
      axpy(w * (t - 1.0) / t, prev_R.row(j), r_out);
    }
  }
  return out;
}

/// Grouped recursion for finite state spaces. Same arithmetic as the generic
/// path up to summation order: particles with equal state values have equal
/// backward weights, so only per-state weight totals W_k and weighted R
/// totals V_k enter the update.
template <class State, class Obs>
void detail_update_grouped(const ParticleSystem<State>& prev_ps,
                           const SmoothedStatistics& prev_R,
                           const ParticleSystem<State>& new_ps,
                           const ModelSpec<State, Obs>& model,
                           const Parameter& theta, const Obs& y,
                           SmoothedStatistics& out) {
  const std::size_t n_prev = prev_ps.size();
  const std::size_t n_new = new_ps.size();
  const std::size_t d = model.d_stat;
  const std::size_t K = model.n_states;
  const auto t = static_cast<double>(new_ps.t);

  const std::vector<double> w_prev = prev_ps.weights();
  std::vector<double> W(K, 0.0);
  std::vector<double> V(K * d, 0.0);
  for (std::size_t j = 0; j < n_prev; ++j) {
    const auto k = static_cast<std::size_t>(prev_ps.particles[j]);
    W[k] += w_prev[j];
    axpy(w_prev[j], prev_R.row(j), {V.data() + k * d, d});
  }

  std::vector<double> s_buf(d);
  std::vector<double> m_val(K);
  for (std::size_t l = 0; l < n_new; ++l) {
    const State& xl = new_ps.particles[l];
    double denom = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      m_val[k] = W[k] > 0.0
                     ? std::exp(model.log_transition(
                           theta, static_cast<State>(k), xl, y))
                     : 0.0;
      denom += m_val[k] * W[k];
    }
    if (!(denom > 0.0))
      throw DegenerateSystemError(
          "update_statistics: degenerate backward kernel", -1, new_ps.t);
    auto r_out = out.row(l);
    for (std::size_t k = 0; k < K; ++k) {
      if (m_val[k] * W[k] == 0.0) continue;
      const double wk = m_val[k] / denom;
      model.statistic(static_cast<State>(k), xl, y, s_buf);
      axpy(wk * W[k] / t, s_buf, r_out);
      axpy(wk * (t - 1.0) / t, {V.data() + k * d, d}, r_out);
    }
  }
}

/// Block statistic: the filter expectation of R at the end of the block,
/// sum_l omega_tau^l R_tau^l with weights normalized to sum 1.
template <class State, class Obs>
SufficientStatistic finalize_block_statistic(const ModelSpec<State, Obs>& model,
                                             const ParticleSystem<State>& ps,
                                             const SmoothedStatistics& R) {
  if (R.t != ps.t)
    throw std::invalid_argument(
        "finalize_block_statistic: R/particle time mismatch");
  const std::vector<double> w = ps.weights();
  std::vector<double> s(model.d_stat, 0.0);
  for (std::size_t l = 0; l < ps.size(); ++l) axpy(w[l], R.row(l), s);
  return model.make_statistic(std::move(s));
}

}  // namespace pboem

#endif  // PBOEM_SMOOTHER_HPP
