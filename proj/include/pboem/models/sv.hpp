#ifndef PBOEM_MODELS_SV_HPP
#define PBOEM_MODELS_SV_HPP

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "pboem/model.hpp"

namespace pboem::models {

/// Stochastic volatility model
///   X_{t+1} = phi X_t + sigma U_t,   Y_t = beta exp(X_t / 2) V_t,
/// X_0 ~ N(0, sigma^2 / (1 - phi^2)), theta = (phi, sigma2, beta2).
///
/// Statistic S(x, x', y) = (x^2, x'^2, x x', y^2 exp(-x')), with M-step
///   phi    = s3 / s1
///   sigma2 = s2 - s3^2 / s1
///   beta2  = s4
/// obtained from stationarity of phi(theta) + <s, psi(theta)> in each
/// coordinate. The theta-free emission term -x'/2 lives in log_offset.
inline ModelSpec<double, double> sv_model() {
  constexpr double eps = 1e-3;
  ModelSpec<double, double> m;
  m.d_theta = 3;
  m.d_stat = 4;
  // Feasible box chosen so the particle system cannot die:
  //  - sigma2 floor: with sigma2 ~ 0 the transitions are deterministic,
  //    particle diversity vanishes and every subsequent residual-variance
  //    estimate is ~ 0 again — a collapse would be absorbing;
  //  - phi and sigma2 caps: the block-initial variance sigma2 / (1 - phi^2)
  //    stays <= 5e3, so exp(-x) in the emission weight cannot overflow to
  //    -inf for an entire particle cloud.
  m.theta_lower = {-1.0 + eps, 1e-2, 1e-8};
  m.theta_upper = {1.0 - eps, 10.0, 1e3};

  m.sample_initial = [](Rng& rng, const Parameter& th) {
    const double var = th[1] / (1.0 - th[0] * th[0]);
    return rng.normal(0.0, std::sqrt(var));
  };
  m.log_initial = [](const Parameter& th, const double& x) {
    return log_normal_pdf(x, 0.0, th[1] / (1.0 - th[0] * th[0]));
  };
  m.log_transition = [](const Parameter& th, const double& x,
                        const double& xn, const double&) {
    return log_normal_pdf(xn, th[0] * x, th[1]);
  };
  m.sample_transition = [](Rng& rng, const Parameter& th, const double& x,
                           const double&) {
    return th[0] * x + std::sqrt(th[1]) * rng.normal();
  };
  m.log_emission = [](const Parameter& th, const double& x, const double& y) {
    return -0.5 * std::log(2.0 * std::numbers::pi * th[2]) - 0.5 * x -
           0.5 * y * y * std::exp(-x) / th[2];
  };
  m.sample_emission = [](Rng& rng, const Parameter& th, const double& x) {
    return std::sqrt(th[2]) * std::exp(0.5 * x) * rng.normal();
  };
  m.statistic = [](const double& x, const double& xn, const double& y,
                   std::span<double> out) {
    out[0] = x * x;
    out[1] = xn * xn;
    out[2] = x * xn;
    out[3] = y * y * std::exp(-xn);
  };
  m.m_step_raw = [](const SufficientStatistic& s) {
    if (!(s[0] > 0.0))
      throw std::domain_error("sv m_step: s1 (prior second moment) must be > 0");
    const double phi = s[2] / s[0];
    const double sigma2 = s[1] - s[2] * s[2] / s[0];
    if (!(sigma2 > 0.0))
      throw std::domain_error("sv m_step: residual variance must be > 0");
    if (!(s[3] > 0.0))
      throw std::domain_error("sv m_step: emission moment must be > 0");
    return std::vector<double>{phi, sigma2, s[3]};
  };
  m.stat_in_domain = [](const SufficientStatistic& s) {
    return s[0] > 0.0 && s[1] > 0.0 && s[3] > 0.0 &&
           s[1] - s[2] * s[2] / s[0] > 0.0;
  };
  m.project_stat = [](const SufficientStatistic& s) {
    constexpr double floor = 1e-10;
    std::vector<double> v = s.value;
    v[0] = std::max(v[0], floor);
    v[1] = std::max(v[1], floor);
    v[3] = std::max(v[3], floor);
    // Shrink the cross moment until the residual variance is positive.
    const double bound = (1.0 - 1e-9) * std::sqrt(v[0] * v[1]);
    if (std::abs(v[2]) > bound) v[2] = v[2] > 0.0 ? bound : -bound;
    return SufficientStatistic{std::move(v)};
  };
  m.log_normalizer = [](const Parameter& th) {
    return -0.5 * std::log(2.0 * std::numbers::pi * th[1]) -
           0.5 * std::log(2.0 * std::numbers::pi * th[2]);
  };
  m.natural_param = [](const Parameter& th, std::span<double> out) {
    out[0] = -th[0] * th[0] / (2.0 * th[1]);
    out[1] = -1.0 / (2.0 * th[1]);
    out[2] = th[0] / th[1];
    out[3] = -1.0 / (2.0 * th[2]);
  };
  m.log_offset = [](const double&, const double& xn, const double&) {
    return -0.5 * xn;
  };
  return m;
}

}  // namespace pboem::models

#endif  // PBOEM_MODELS_SV_HPP
