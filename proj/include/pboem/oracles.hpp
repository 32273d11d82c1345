#ifndef PBOEM_ORACLES_HPP
#define PBOEM_ORACLES_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "pboem/math.hpp"
#include "pboem/model.hpp"

namespace pboem {

/// Exact smoothed additive statistic
///   (1/tau) sum_{t=1..tau} E[S(X_{t-1}, X_t, Y_t) | Y_{1:tau}]
/// for a finite-state model, via forward-backward pairwise marginals with
/// per-step normalization.
template <class Obs>
SufficientStatistic exact_statistic_finite(const ModelSpec<int, Obs>& model,
                                           const Parameter& theta,
                                           std::span<const Obs> observations) {
  const std::size_t K = model.n_states;
  if (K == 0 || K > 64)
    throw std::invalid_argument("exact_statistic_finite: need 1 <= |X| <= 64");
  const std::size_t tau = observations.size();
  const std::size_t d = model.d_stat;
  if (tau == 0) return model.make_statistic(std::vector<double>(d, 0.0));

  std::vector<double> chi(K), A(K * K);
  for (std::size_t i = 0; i < K; ++i)
    chi[i] = std::exp(model.log_initial(theta, static_cast<int>(i)));
  // Transition table; finite models have time-invariant transitions so the
  // observation argument is immaterial.
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j)
      A[i * K + j] = std::exp(model.log_transition(
          theta, static_cast<int>(i), static_cast<int>(j), observations[0]));

  auto emission = [&](std::size_t j, std::size_t t) {
    return std::exp(model.log_emission(theta, static_cast<int>(j),
                                       observations[t - 1]));
  };

  // Forward pass, normalized: alpha[t][j] = P(X_t = j | Y_{1:t}).
  // alpha[0] = chi (no emission attached to X_0).
  std::vector<std::vector<double>> alpha(tau + 1,
                                         std::vector<double>(K, 0.0));
  alpha[0] = chi;
  for (std::size_t t = 1; t <= tau; ++t) {
    double norm = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < K; ++i) acc += alpha[t - 1][i] * A[i * K + j];
      alpha[t][j] = acc * emission(j, t);
      norm += alpha[t][j];
    }
    if (!(norm > 0.0))
      throw std::runtime_error("exact_statistic_finite: zero likelihood step");
    for (double& x : alpha[t]) x /= norm;
  }

  // Backward pass, normalized: beta[t][i] proportional to
  // p(Y_{t+1:tau} | X_t = i).
  std::vector<std::vector<double>> beta(tau + 1, std::vector<double>(K, 1.0));
  for (std::size_t t = tau; t-- > 0;) {
    double norm = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < K; ++j)
        acc += A[i * K + j] * emission(j, t + 1) * beta[t + 1][j];
      beta[t][i] = acc;
      norm += acc;
    }
    for (double& x : beta[t]) x /= norm;
  }

  std::vector<double> stat(d, 0.0), s_buf(d);
  for (std::size_t t = 1; t <= tau; ++t) {
    // Pairwise posterior p(X_{t-1} = i, X_t = j | Y_{1:tau}).
    std::vector<double> pair(K * K);
    double norm = 0.0;
    for (std::size_t i = 0; i < K; ++i)
      for (std::size_t j = 0; j < K; ++j) {
        pair[i * K + j] =
            alpha[t - 1][i] * A[i * K + j] * emission(j, t) * beta[t][j];
        norm += pair[i * K + j];
      }
    for (std::size_t i = 0; i < K; ++i)
      for (std::size_t j = 0; j < K; ++j) {
        const double p = pair[i * K + j] / norm;
        if (p == 0.0) continue;
        std::fill(s_buf.begin(), s_buf.end(), 0.0);
        model.statistic(static_cast<int>(i), static_cast<int>(j),
                        observations[t - 1], s_buf);
        axpy(p / static_cast<double>(tau), s_buf, stat);
      }
  }
  return model.make_statistic(std::move(stat));
}

/// Independent oracle: evaluates the smoothed statistic by enumerating all
/// |X|^(tau+1) paths. Guarded to small instances.
template <class Obs>
SufficientStatistic brute_force_statistic(const ModelSpec<int, Obs>& model,
                                          const Parameter& theta,
                                          std::span<const Obs> observations) {
  const std::size_t K = model.n_states;
  const std::size_t tau = observations.size();
  const std::size_t d = model.d_stat;
  if (tau == 0) return model.make_statistic(std::vector<double>(d, 0.0));
  double n_paths = std::pow(static_cast<double>(K),
                            static_cast<double>(tau + 1));
  if (!(n_paths <= 1e6))
    throw std::invalid_argument("brute_force_statistic: instance too large");

  std::vector<double> num(d, 0.0), s_buf(d), path_stat(d);
  double denom = 0.0;
  std::vector<int> path(tau + 1, 0);
  const auto total = static_cast<std::size_t>(n_paths);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t t = 0; t <= tau; ++t) {
      path[t] = static_cast<int>(c % K);
      c /= K;
    }
    double logw = model.log_initial(theta, path[0]);
    std::fill(path_stat.begin(), path_stat.end(), 0.0);
    for (std::size_t t = 1; t <= tau; ++t) {
      logw += model.log_transition(theta, path[t - 1], path[t],
                                   observations[t - 1]) +
              model.log_emission(theta, path[t], observations[t - 1]);
      std::fill(s_buf.begin(), s_buf.end(), 0.0);
      model.statistic(path[t - 1], path[t], observations[t - 1], s_buf);
      axpy(1.0 / static_cast<double>(tau), s_buf, path_stat);
    }
    const double w = std::exp(logw);
    denom += w;
    axpy(w, path_stat, num);
  }
  if (!(denom > 0.0))
    throw std::runtime_error("brute_force_statistic: zero likelihood");
  for (double& x : num) x /= denom;
  return model.make_statistic(std::move(num));
}

/// Scalar linear-Gaussian smoother output per time step.
struct LgssmSmoothed {
  std::vector<double> mean;      // E[X_t | Y_{1:tau}], t = 0..tau
  std::vector<double> var;       // Var[X_t | Y_{1:tau}]
  std::vector<double> lag_cov;   // Cov[X_{t-1}, X_t | Y_{1:tau}], t = 1..tau
};

/// Kalman filter + RTS smoother for the scalar model
///   X_t = phi X_{t-1} + N(0, q),  Y_t = X_t + N(0, r),
///   X_0 ~ N(0, q / (1 - phi^2)).
inline LgssmSmoothed lgssm_smooth(double phi, double q, double r,
                                  std::span<const double> y) {
  const std::size_t tau = y.size();
  std::vector<double> mf(tau + 1), pf(tau + 1);   // filtered
  std::vector<double> mp(tau + 1), pp(tau + 1);   // predicted
  mf[0] = 0.0;
  pf[0] = q / (1.0 - phi * phi);
  for (std::size_t t = 1; t <= tau; ++t) {
    mp[t] = phi * mf[t - 1];
    pp[t] = phi * phi * pf[t - 1] + q;
    const double s = pp[t] + r;  // innovation variance
    if (!(s > 0.0))
      throw std::runtime_error("lgssm_smooth: non-positive innovation variance");
    const double k = pp[t] / s;
    mf[t] = mp[t] + k * (y[t - 1] - mp[t]);
    pf[t] = (1.0 - k) * pp[t];
  }
  LgssmSmoothed out;
  out.mean.resize(tau + 1);
  out.var.resize(tau + 1);
  out.lag_cov.resize(tau + 1, 0.0);
  out.mean[tau] = mf[tau];
  out.var[tau] = pf[tau];
  for (std::size_t t = tau; t-- > 0;) {
    const double g = pf[t] * phi / pp[t + 1];  // RTS gain
    out.mean[t] = mf[t] + g * (out.mean[t + 1] - mp[t + 1]);
    out.var[t] = pf[t] + g * g * (out.var[t + 1] - pp[t + 1]);
    out.lag_cov[t + 1] = g * out.var[t + 1];
  }
  return out;
}

/// Exact block statistic for the scalar LGSSM, assembled from the smoothed
/// first and second moments. Matches the statistic layout of lgssm_model():
///   (x_{t-1}^2, x_t^2, x_{t-1} x_t, x_t y_t, y_t^2), time-averaged.
inline SufficientStatistic exact_statistic_lgssm(double phi, double q, double r,
                                                 std::span<const double> y) {
  const std::size_t tau = y.size();
  if (tau == 0)
    return SufficientStatistic{std::vector<double>(5, 0.0)};
  const LgssmSmoothed sm = lgssm_smooth(phi, q, r, y);
  std::vector<double> s(5, 0.0);
  for (std::size_t t = 1; t <= tau; ++t) {
    const double m0 = sm.mean[t - 1], m1 = sm.mean[t];
    s[0] += m0 * m0 + sm.var[t - 1];
    s[1] += m1 * m1 + sm.var[t];
    s[2] += m0 * m1 + sm.lag_cov[t];
    s[3] += m1 * y[t - 1];
    s[4] += y[t - 1] * y[t - 1];
  }
  for (double& x : s) x /= static_cast<double>(tau);
  return SufficientStatistic{std::move(s)};
}

}  // namespace pboem

#endif  // PBOEM_ORACLES_HPP
