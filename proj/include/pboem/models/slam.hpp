#ifndef PBOEM_MODELS_SLAM_HPP
#define PBOEM_MODELS_SLAM_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "pboem/math.hpp"
#include "pboem/model.hpp"
#include "pboem/rng.hpp"

namespace pboem::models {

/// Robot pose: cartesian position (m) and heading (rad), heading kept in
/// (-pi, pi].
struct SlamState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

/// One range-bearing measurement of a known landmark.
struct LandmarkMeasurement {
  std::size_t landmark = 0;
  double range = 0.0;    // m, >= 0
  double bearing = 0.0;  // rad, wrapped
};

/// Observation at one time step: the (noise-free, known) control inputs that
/// produced the step, plus the measurements of the visible landmarks. The
/// control rides along because the transition kernel is time-varying.
struct SlamObservation {
  double v = 0.0;    // commanded velocity, m/s
  double psi = 0.0;  // commanded steering angle, rad
  std::vector<LandmarkMeasurement> measurements;
};

/// Landmark map estimate: q planar positions, flattened (x1, y1, x2, y2, ...).
struct SlamMap {
  std::vector<double> coords;
  std::size_t size() const { return coords.size() / 2; }
};

struct SlamConfig {
  double dt = 0.25;        // s between successive poses
  double wheelbase = 1.5;  // m
  double sigma_v = 0.5;    // control noise, m/s
  double sigma_psi = std::numbers::pi / 60.0;  // control noise, rad
  double sigma_r = 0.5;    // range noise, m
  double sigma_b = std::numbers::pi / 60.0;    // bearing noise, rad
  double rho = 0.01;       // range/bearing noise covariance
  double sensing_radius = 15.0;  // m, landmark visibility
  double transition_jitter = 1e-3;  // regularization of the pose density
  double sim_noise_scale = 1.0;     // 0 disables simulation noise draws
  double m_step_damping = 20.0;  // ridge toward the linearization point
};

/// Bicycle kinematics: advance the pose under realized controls
/// (v_hat, psi_hat). Heading is wrapped after the step.
inline SlamState slam_transition_det(const SlamState& s, double v_hat,
                                     double psi_hat, double dt, double B) {
  if (!(dt > 0.0) || !(B > 0.0))
    throw std::invalid_argument("slam_transition: dt and wheelbase must be > 0");
  SlamState out;
  out.x = s.x + v_hat * dt * std::cos(s.heading + psi_hat);
  out.y = s.y + v_hat * dt * std::sin(s.heading + psi_hat);
  out.heading = wrap_angle(s.heading + v_hat * dt / B * std::sin(psi_hat));
  return out;
}

/// Transition with Gaussian control noise N((v, psi), Q).
inline SlamState slam_transition(const SlamState& s, double v, double psi,
                                 Rng& rng, const SlamConfig& cfg) {
  const double v_hat = v + cfg.sim_noise_scale * cfg.sigma_v * rng.normal();
  const double psi_hat =
      psi + cfg.sim_noise_scale * cfg.sigma_psi * rng.normal();
  return slam_transition_det(s, v_hat, psi_hat, cfg.dt, cfg.wheelbase);
}

/// Range-bearing measurement function h(x, kappa).
inline std::array<double, 2> slam_h(const SlamState& s, double kx, double ky) {
  const double dx = kx - s.x;
  const double dy = ky - s.y;
  const double r = std::hypot(dx, dy);
  if (!(r > 0.0))
    throw std::runtime_error("slam_h: landmark coincides with robot position");
  return {r, wrap_angle(std::atan2(dy, dx) - s.heading)};
}

/// Jacobian of h in the landmark coordinates.
inline std::array<double, 4> slam_h_jacobian(const SlamState& s, double kx,
                                             double ky) {
  const double dx = kx - s.x;
  const double dy = ky - s.y;
  const double r2 = dx * dx + dy * dy;
  const double r = std::sqrt(r2);
  return {dx / r, dy / r, -dy / r2, dx / r2};
}

/// Noisy observation of the visible landmarks.
inline SlamObservation slam_observe(const SlamState& s, const SlamMap& map,
                                    const std::vector<std::size_t>& visible,
                                    double v, double psi, Rng& rng,
                                    const SlamConfig& cfg) {
  // Correlated (range, bearing) noise via the Cholesky factor of R.
  const double l11 = cfg.sigma_r;
  const double l21 = cfg.rho / cfg.sigma_r;
  const double l22_sq = cfg.sigma_b * cfg.sigma_b - l21 * l21;
  if (!(l22_sq > 0.0))
    throw std::invalid_argument("slam_observe: R is not positive definite");
  const double l22 = std::sqrt(l22_sq);

  SlamObservation obs;
  obs.v = v;
  obs.psi = psi;
  for (std::size_t i : visible) {
    if (i >= map.size())
      throw std::invalid_argument("slam_observe: landmark index out of range");
    const auto h = slam_h(s, map.coords[2 * i], map.coords[2 * i + 1]);
    const double n1 = rng.normal();
    const double n2 = rng.normal();
    LandmarkMeasurement meas;
    meas.landmark = i;
    meas.range = h[0] + cfg.sim_noise_scale * l11 * n1;
    meas.bearing =
        wrap_angle(h[1] + cfg.sim_noise_scale * (l21 * n1 + l22 * n2));
    obs.measurements.push_back(meas);
  }
  return obs;
}

namespace detail {

// Inverse of R = [[sr^2, rho], [rho, sb^2]] and log-normalizing constant.
struct NoiseInfo {
  double i11, i12, i22;
  double log_norm;  // -log(2 pi) - 0.5 log det R
};

inline NoiseInfo noise_info(const SlamConfig& cfg) {
  const double a = cfg.sigma_r * cfg.sigma_r;
  const double b = cfg.rho;
  const double c = cfg.sigma_b * cfg.sigma_b;
  const double det = a * c - b * b;
  if (!(det > 0.0))
    throw std::invalid_argument("slam: R is not positive definite");
  return {c / det, -b / det, a / det,
          -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det)};
}

// Pose transition log-density: Gaussian approximation around the
// deterministic move, covariance J Q J^T + jitter^2 I where J is the
// Jacobian of the kinematics in the controls. The exact kinematic noise is
// rank-2 in a 3-dimensional state, so it has no Lebesgue density; this
// linearized form is what the backward smoothing weights evaluate.
inline double slam_log_transition(const SlamState& s, const SlamState& sn,
                                  double v, double psi, const SlamConfig& cfg) {
  const SlamState mean = slam_transition_det(s, v, psi, cfg.dt, cfg.wheelbase);
  const double dt = cfg.dt, B = cfg.wheelbase;
  const double cs = std::cos(s.heading + psi);
  const double sn_ = std::sin(s.heading + psi);
  // J = d f / d (v_hat, psi_hat) at (v, psi); rows: x, y, heading.
  const double J[3][2] = {{dt * cs, -v * dt * sn_},
                          {dt * sn_, v * dt * cs},
                          {dt / B * std::sin(psi), v * dt / B * std::cos(psi)}};
  const double qv = cfg.sigma_v * cfg.sigma_v;
  const double qp = cfg.sigma_psi * cfg.sigma_psi;
  const double jit = cfg.transition_jitter * cfg.transition_jitter;
  double C[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      C[i][j] = J[i][0] * qv * J[j][0] + J[i][1] * qp * J[j][1] +
                (i == j ? jit : 0.0);
  const double res[3] = {sn.x - mean.x, sn.y - mean.y,
                         wrap_angle(sn.heading - mean.heading)};
  // Solve C z = res by Cholesky (C is SPD thanks to the jitter term).
  double L[3][3] = {};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j <= i; ++j) {
      double acc = C[i][j];
      for (int k = 0; k < j; ++k) acc -= L[i][k] * L[j][k];
      if (i == j) {
        L[i][i] = std::sqrt(acc);
      } else {
        L[i][j] = acc / L[j][j];
      }
    }
  }
  double z[3];
  for (int i = 0; i < 3; ++i) {
    double acc = res[i];
    for (int k = 0; k < i; ++k) acc -= L[i][k] * z[k];
    z[i] = acc / L[i][i];
  }
  const double quad = z[0] * z[0] + z[1] * z[1] + z[2] * z[2];
  const double log_det = 2.0 * (std::log(L[0][0]) + std::log(L[1][1]) +
                                std::log(L[2][2]));
  return -1.5 * std::log(2.0 * std::numbers::pi) - 0.5 * log_det - 0.5 * quad;
}

}  // namespace detail

/// Per-landmark statistic layout: (M11, M12, M22, b1, b2) blocks of the
/// smoothed information matrix M = H^T R^-1 H and information vector
/// b = H^T R^-1 (y - h + H kappa_hat), followed by one scalar quadratic-term
/// coordinate. d = 5q + 1.
inline std::size_t slam_stat_dim(std::size_t q) { return 5 * q + 1; }

/// Per-block model: the measurement function is linearized in the landmark
/// coordinates at the current map estimate `map_hat`, which makes the
/// emission log-density quadratic in the parameter and the model a curved
/// exponential family. The M-step solves q independent 2x2 systems; a
/// landmark with a singular information matrix (not observed in the block)
/// keeps its current estimate.
inline ModelSpec<SlamState, SlamObservation> slam_linearized_block_model(
    const SlamMap& map_hat, const SlamConfig& cfg) {
  const std::size_t q = map_hat.size();
  if (q == 0)
    throw std::invalid_argument("slam model: map must contain landmarks");
  const detail::NoiseInfo R = detail::noise_info(cfg);

  ModelSpec<SlamState, SlamObservation> m;
  m.d_theta = 2 * q;
  m.d_stat = slam_stat_dim(q);
  m.theta_lower.assign(m.d_theta, -1e4);
  m.theta_upper.assign(m.d_theta, 1e4);

  // Within a block the filter starts from the pose tracked at the block
  // boundary; the driver passes it via the carry / init mechanism. The
  // default chi is a point mass at the origin pose.
  m.sample_initial = [](Rng&, const Parameter&) { return SlamState{}; };
  m.log_initial = [](const Parameter&, const SlamState&) { return 0.0; };

  m.log_transition = [cfg](const Parameter&, const SlamState& s,
                           const SlamState& sn, const SlamObservation& y) {
    return detail::slam_log_transition(s, sn, y.v, y.psi, cfg);
  };
  m.sample_transition = [cfg](Rng& rng, const Parameter&, const SlamState& s,
                              const SlamObservation& y) {
    return slam_transition(s, y.v, y.psi, rng, cfg);
  };

  const std::vector<double> lin = map_hat.coords;
  // z_i = y_i - h(x, kappa_hat_i) + H_i kappa_hat_i, the linearized residual
  // shifted so the emission is quadratic in the landmark coordinates.
  auto linearized_terms = [lin](const SlamState& s,
                                const LandmarkMeasurement& meas,
                                std::array<double, 4>& H,
                                std::array<double, 2>& z) {
    const double kx = lin[2 * meas.landmark];
    const double ky = lin[2 * meas.landmark + 1];
    const auto h = slam_h(s, kx, ky);
    H = slam_h_jacobian(s, kx, ky);
    const double dr = meas.range - h[0];
    const double db = wrap_angle(meas.bearing - h[1]);
    z = {dr + H[0] * kx + H[1] * ky, db + H[2] * kx + H[3] * ky};
  };

  m.log_emission = [R, linearized_terms, q](const Parameter& th,
                                            const SlamState& s,
                                            const SlamObservation& y) {
    double acc = 0.0;
    for (const auto& meas : y.measurements) {
      std::array<double, 4> H;
      std::array<double, 2> z;
      linearized_terms(s, meas, H, z);
      const double kx = th[2 * meas.landmark];
      const double ky = th[2 * meas.landmark + 1];
      const double e1 = z[0] - (H[0] * kx + H[1] * ky);
      const double e2 = z[1] - (H[2] * kx + H[3] * ky);
      acc += R.log_norm - 0.5 * (R.i11 * e1 * e1 + 2.0 * R.i12 * e1 * e2 +
                                 R.i22 * e2 * e2);
    }
    return acc;
  };

  m.statistic = [linearized_terms, R, q](const SlamState&, const SlamState& sn,
                                         const SlamObservation& y,
                                         std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& meas : y.measurements) {
      std::array<double, 4> H;
      std::array<double, 2> z;
      linearized_terms(sn, meas, H, z);
      // H^T R^-1 (2x2): rows index kappa coordinates.
      const double a11 = H[0] * R.i11 + H[2] * R.i12;
      const double a12 = H[0] * R.i12 + H[2] * R.i22;
      const double a21 = H[1] * R.i11 + H[3] * R.i12;
      const double a22 = H[1] * R.i12 + H[3] * R.i22;
      double* blk = out.data() + 5 * meas.landmark;
      blk[0] += a11 * H[0] + a12 * H[2];  // M11
      blk[1] += a11 * H[1] + a12 * H[3];  // M12
      blk[2] += a21 * H[1] + a22 * H[3];  // M22
      blk[3] += a11 * z[0] + a12 * z[1];  // b1
      blk[4] += a21 * z[0] + a22 * z[1];  // b2
      out[5 * q] += R.i11 * z[0] * z[0] + 2.0 * R.i12 * z[0] * z[1] +
                    R.i22 * z[1] * z[1];
    }
  };

  const std::vector<double> fallback = map_hat.coords;
  m.m_step_raw = [fallback, q, lam = cfg.m_step_damping](
                     const SufficientStatistic& s) {
    // Per-landmark weighted least squares, damped toward the linearization
    // point: solve (M + lam I) k = b + lam k_lin. A landmark that is barely
    // observed in a block has a near-singular M and would otherwise jump by
    // meters on one block's noise; the damping keeps such updates bounded
    // while leaving fixed points untouched (at a fixed point k = k_lin, so
    // the extra terms cancel and M k = b still holds).
    std::vector<double> th = fallback;
    for (std::size_t i = 0; i < q; ++i) {
      const double m11 = s[5 * i] + lam, m12 = s[5 * i + 1],
                   m22 = s[5 * i + 2] + lam;
      const double b1 = s[5 * i + 3] + lam * fallback[2 * i];
      const double b2 = s[5 * i + 4] + lam * fallback[2 * i + 1];
      const double det = m11 * m22 - m12 * m12;
      if (!(det > 0.0)) continue;  // lam == 0 and landmark unobserved
      th[2 * i] = (m22 * b1 - m12 * b2) / det;
      th[2 * i + 1] = (m11 * b2 - m12 * b1) / det;
    }
    return th;
  };
  m.stat_in_domain = [q](const SufficientStatistic& s) {
    for (std::size_t i = 0; i < q; ++i)
      if (s[5 * i] < 0.0 || s[5 * i + 2] < 0.0) return false;
    return all_finite(s.value);
  };
  m.project_stat = [](const SufficientStatistic& s) { return s; };

  m.log_normalizer = [](const Parameter&) { return 0.0; };
  m.natural_param = [q](const Parameter& th, std::span<double> out) {
    for (std::size_t i = 0; i < q; ++i) {
      const double kx = th[2 * i], ky = th[2 * i + 1];
      out[5 * i] = -0.5 * kx * kx;
      out[5 * i + 1] = -kx * ky;
      out[5 * i + 2] = -0.5 * ky * ky;
      out[5 * i + 3] = kx;
      out[5 * i + 4] = ky;
    }
    out[5 * q] = -0.5;
  };
  m.log_offset = [R, cfg](const SlamState& s, const SlamState& sn,
                          const SlamObservation& y) {
    return detail::slam_log_transition(s, sn, y.v, y.psi, cfg) +
           R.log_norm * static_cast<double>(y.measurements.size());
  };
  return m;
}

}  // namespace pboem::models

#endif  // PBOEM_MODELS_SLAM_HPP
