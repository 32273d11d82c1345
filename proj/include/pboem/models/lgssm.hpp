#ifndef PBOEM_MODELS_LGSSM_HPP
#define PBOEM_MODELS_LGSSM_HPP

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "pboem/model.hpp"

namespace pboem::models {

/// Scalar linear-Gaussian state-space model
///   X_t = phi X_{t-1} + N(0, q),   Y_t = X_t + N(0, r),
/// X_0 ~ N(0, q / (1 - phi^2)), theta = (phi, q, r).
///
/// Statistic S(x, x', y) = (x^2, x'^2, x x', x' y, y^2); the M-step is the
/// least-squares / residual-moment solution
///   phi = s3 / s1,  q = s2 - s3^2 / s1,  r = s5 - 2 s4 + s2.
/// The exponential-family identity holds exactly (no offset).
inline ModelSpec<double, double> lgssm_model() {
  ModelSpec<double, double> m;
  m.d_theta = 3;
  m.d_stat = 5;
  m.theta_lower = {-1.0, 1e-10, 1e-10};
  m.theta_upper = {1.0, 1e3, 1e3};

  auto stationary_var = [](const Parameter& th) {
    const double denom = std::max(1.0 - th[0] * th[0], 1e-8);
    return th[1] / denom;
  };
  m.sample_initial = [stationary_var](Rng& rng, const Parameter& th) {
    return rng.normal(0.0, std::sqrt(stationary_var(th)));
  };
  m.log_initial = [stationary_var](const Parameter& th, const double& x) {
    return log_normal_pdf(x, 0.0, stationary_var(th));
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
    return log_normal_pdf(y, x, th[2]);
  };
  m.sample_emission = [](Rng& rng, const Parameter& th, const double& x) {
    return x + std::sqrt(th[2]) * rng.normal();
  };
  m.statistic = [](const double& x, const double& xn, const double& y,
                   std::span<double> out) {
    out[0] = x * x;
    out[1] = xn * xn;
    out[2] = x * xn;
    out[3] = xn * y;
    out[4] = y * y;
  };
  m.m_step_raw = [](const SufficientStatistic& s) {
    if (!(s[0] > 0.0))
      throw std::domain_error("lgssm m_step: s1 (prior second moment) must be > 0");
    const double phi = s[2] / s[0];
    const double q = s[1] - s[2] * s[2] / s[0];
    const double r = s[4] - 2.0 * s[3] + s[1];
    if (!(q > 0.0))
      throw std::domain_error("lgssm m_step: state residual variance must be > 0");
    if (!(r > 0.0))
      throw std::domain_error("lgssm m_step: emission residual variance must be > 0");
    return std::vector<double>{phi, q, r};
  };
  m.stat_in_domain = [](const SufficientStatistic& s) {
    return s[0] > 0.0 && s[1] > 0.0 && s[1] - s[2] * s[2] / s[0] > 0.0 &&
           s[4] - 2.0 * s[3] + s[1] > 0.0;
  };
  m.project_stat = [](const SufficientStatistic& s) {
    constexpr double floor = 1e-10;
    std::vector<double> v = s.value;
    v[0] = std::max(v[0], floor);
    v[1] = std::max(v[1], floor);
    const double bound = (1.0 - 1e-9) * std::sqrt(v[0] * v[1]);
    if (std::abs(v[2]) > bound) v[2] = v[2] > 0.0 ? bound : -bound;
    // Inflate the observation moment until the emission residual is positive.
    const double resid = v[4] - 2.0 * v[3] + v[1];
    if (!(resid > floor)) v[4] += floor - resid;
    return SufficientStatistic{std::move(v)};
  };
  m.log_normalizer = [](const Parameter& th) {
    return -0.5 * std::log(2.0 * std::numbers::pi * th[1]) -
           0.5 * std::log(2.0 * std::numbers::pi * th[2]);
  };
  m.natural_param = [](const Parameter& th, std::span<double> out) {
    out[0] = -th[0] * th[0] / (2.0 * th[1]);
    out[1] = -1.0 / (2.0 * th[1]) - 1.0 / (2.0 * th[2]);
    out[2] = th[0] / th[1];
    out[3] = 1.0 / th[2];
    out[4] = -1.0 / (2.0 * th[2]);
  };
  return m;
}

}  // namespace pboem::models

#endif  // PBOEM_MODELS_LGSSM_HPP
