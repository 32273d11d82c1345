#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "pboem/models/finite_hmm.hpp"
#include "pboem/models/lgssm.hpp"
#include "pboem/models/slam.hpp"
#include "pboem/models/sv.hpp"
#include "pboem/rng.hpp"

using namespace pboem;
using namespace pboem::models;

TEST_CASE("SV simulation is reproducible under a fixed seed") {
  const auto m = sv_model();
  const Parameter th = m.make_parameter({0.95, 0.1, 0.6});
  auto simulate = [&](std::uint64_t seed) {
    Rng rng(seed);
    double x = m.sample_initial(rng, th);
    std::vector<double> y;
    for (int t = 0; t < 50; ++t) {
      x = m.sample_transition(rng, th, x, 0.0);
      y.push_back(m.sample_emission(rng, th, x));
    }
    return y;
  };
  REQUIRE(simulate(2024) == simulate(2024));
  REQUIRE(simulate(2024) != simulate(2025));
}

TEST_CASE("finite HMM M-step recovers row frequencies") {
  const auto m = finite_hmm_model(2, 2);
  // Identity-like emission: complete-data counts feed the M-step directly.
  std::vector<double> counts = {
      30.0, 10.0,   // from state 0: 3/4 vs 1/4
      5.0,  15.0,   // from state 1: 1/4 vs 3/4
      20.0, 0.0,    // state 0 emits symbol 0 always
      0.0,  20.0};  // state 1 emits symbol 1 always
  const Parameter th = m.m_step(SufficientStatistic{counts});
  REQUIRE_THAT(th[0], Catch::Matchers::WithinAbs(0.75, 1e-14));
  REQUIRE_THAT(th[1], Catch::Matchers::WithinAbs(0.25, 1e-14));
  REQUIRE_THAT(th[2], Catch::Matchers::WithinAbs(0.25, 1e-14));
  REQUIRE_THAT(th[3], Catch::Matchers::WithinAbs(0.75, 1e-14));
  REQUIRE(th[4] == 1.0);
  REQUIRE(th[7] == 1.0);
}

TEST_CASE("uniform counts give uniform tables") {
  const auto m = finite_hmm_model(3, 2);
  std::vector<double> counts(m.d_stat, 2.5);
  const Parameter th = m.m_step(SufficientStatistic{counts});
  for (int i = 0; i < 9; ++i)
    REQUIRE_THAT(th[i], Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-14));
  for (int i = 9; i < 15; ++i)
    REQUIRE_THAT(th[i], Catch::Matchers::WithinAbs(0.5, 1e-14));
}

TEST_CASE("finite HMM construction rejects bad tables") {
  const auto m = finite_hmm_model(2, 2);
  REQUIRE_THROWS_AS(
      finite_hmm_parameter(m, {0.8, 0.3, 0.3, 0.7}, {0.5, 0.5, 0.5, 0.5}),
      std::invalid_argument);
  REQUIRE_THROWS_AS(
      finite_hmm_parameter(m, {0.8, 0.2, 0.3, 0.7}, {-0.1, 1.1, 0.5, 0.5}),
      std::invalid_argument);
  REQUIRE_THROWS_AS(finite_hmm_model(0, 2), std::invalid_argument);
}

TEST_CASE("LGSSM M-step plug-in consistency on simulated complete data") {
  const auto m = lgssm_model();
  const Parameter truth = m.make_parameter({0.7, 0.4, 0.3});
  Rng rng(derive_seed(33, 0, 0));
  const std::size_t n = 400'000;
  double x = m.sample_initial(rng, truth);
  std::vector<double> acc(5, 0.0), buf(5);
  for (std::size_t t = 0; t < n; ++t) {
    const double xn = m.sample_transition(rng, truth, x, 0.0);
    const double y = m.sample_emission(rng, truth, xn);
    m.statistic(x, xn, y, buf);
    for (int i = 0; i < 5; ++i) acc[i] += buf[i];
    x = xn;
  }
  for (double& v : acc) v /= static_cast<double>(n);
  const Parameter th = m.m_step(SufficientStatistic{acc});
  REQUIRE_THAT(th[0], Catch::Matchers::WithinAbs(0.7, 1e-2));
  REQUIRE_THAT(th[1], Catch::Matchers::WithinAbs(0.4, 1e-2));
  REQUIRE_THAT(th[2], Catch::Matchers::WithinAbs(0.3, 1e-2));
}

TEST_CASE("slam_transition kinematics") {
  SlamConfig cfg;
  SECTION("zero steering, zero heading: pure x advance") {
    const SlamState s{1.0, 2.0, 0.0};
    const SlamState out = slam_transition_det(s, 3.0, 0.0, 0.25, 1.5);
    REQUIRE_THAT(out.x, Catch::Matchers::WithinAbs(1.75, 1e-14));
    REQUIRE_THAT(out.y, Catch::Matchers::WithinAbs(2.0, 1e-14));
    REQUIRE_THAT(out.heading, Catch::Matchers::WithinAbs(0.0, 1e-14));
  }
  SECTION("zero velocity: state unchanged") {
    const SlamState s{1.0, 2.0, 0.7};
    const SlamState out = slam_transition_det(s, 0.0, 0.3, 0.25, 1.5);
    REQUIRE(out.x == s.x);
    REQUIRE(out.y == s.y);
    REQUIRE(out.heading == s.heading);
  }
  SECTION("invalid geometry rejected") {
    REQUIRE_THROWS_AS(slam_transition_det({}, 1.0, 0.0, 0.0, 1.5),
                      std::invalid_argument);
  }
  SECTION("noise distribution matches the control-noise propagation") {
    // Sample moments vs an independent Monte Carlo oracle that draws the
    // controls directly and applies the deterministic map.
    const SlamState s{0.0, 0.0, 0.4};
    const double v = 3.0, psi = 0.1;
    Rng rng(derive_seed(41, 0, 0));
    Rng oracle_rng(derive_seed(41, 1, 0));
    const std::size_t n = 10'000;
    std::array<double, 2> mean{}, oracle_mean{};
    for (std::size_t k = 0; k < n; ++k) {
      const SlamState a = slam_transition(s, v, psi, rng, cfg);
      mean[0] += a.x / n;
      mean[1] += a.y / n;
      const double vh = v + cfg.sigma_v * oracle_rng.normal();
      const double ph = psi + cfg.sigma_psi * oracle_rng.normal();
      const SlamState b = slam_transition_det(s, vh, ph, cfg.dt, cfg.wheelbase);
      oracle_mean[0] += b.x / n;
      oracle_mean[1] += b.y / n;
    }
    // Both estimate the same pushforward mean; SE of each coord is about
    // sigma_v * dt / sqrt(n) ~ 1.3e-3.
    REQUIRE(std::abs(mean[0] - oracle_mean[0]) < 6e-3);
    REQUIRE(std::abs(mean[1] - oracle_mean[1]) < 6e-3);
  }
  SECTION("heading stays wrapped under long random driving") {
    Rng rng(derive_seed(43, 0, 0));
    SlamState s{0.0, 0.0, 3.0};
    for (int t = 0; t < 2000; ++t) {
      s = slam_transition(s, rng.uniform(0.0, 5.0),
                          rng.uniform(-0.5, 0.5), rng, cfg);
      REQUIRE(s.heading > -std::numbers::pi);
      REQUIRE(s.heading <= std::numbers::pi);
    }
  }
}

TEST_CASE("slam_observe geometry and noise") {
  SlamConfig cfg;
  SECTION("landmark due east, zero heading") {
    cfg.sim_noise_scale = 0.0;
    SlamMap map{{4.0, 2.0}};
    const SlamState s{1.0, 2.0, 0.0};
    Rng rng(1);
    const auto obs = slam_observe(s, map, {0}, 1.0, 0.0, rng, cfg);
    REQUIRE_THAT(obs.measurements[0].range,
                 Catch::Matchers::WithinAbs(3.0, 1e-14));
    REQUIRE_THAT(obs.measurements[0].bearing,
                 Catch::Matchers::WithinAbs(0.0, 1e-14));
  }
  SECTION("landmark due north, heading pi/2") {
    cfg.sim_noise_scale = 0.0;
    SlamMap map{{0.0, 2.0}};
    const SlamState s{0.0, 0.0, std::numbers::pi / 2.0};
    Rng rng(1);
    const auto obs = slam_observe(s, map, {0}, 1.0, 0.0, rng, cfg);
    REQUIRE_THAT(obs.measurements[0].range,
                 Catch::Matchers::WithinAbs(2.0, 1e-14));
    REQUIRE_THAT(obs.measurements[0].bearing,
                 Catch::Matchers::WithinAbs(0.0, 1e-12));
  }
  SECTION("coincident landmark raises an error") {
    SlamMap map{{1.0, 2.0}};
    REQUIRE_THROWS(slam_h({1.0, 2.0, 0.0}, 1.0, 2.0));
  }
  SECTION("sample covariance of the measurement noise matches R") {
    SlamMap map{{10.0, 0.0}};
    const SlamState s{0.0, 0.0, 0.0};
    Rng rng(derive_seed(47, 0, 0));
    const std::size_t n = 100'000;
    double m1 = 0, m2 = 0, c11 = 0, c12 = 0, c22 = 0;
    std::vector<std::array<double, 2>> draws(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto obs = slam_observe(s, map, {0}, 1.0, 0.0, rng, cfg);
      draws[k] = {obs.measurements[0].range - 10.0,
                  obs.measurements[0].bearing};
      m1 += draws[k][0] / n;
      m2 += draws[k][1] / n;
    }
    for (const auto& d : draws) {
      c11 += (d[0] - m1) * (d[0] - m1) / n;
      c12 += (d[0] - m1) * (d[1] - m2) / n;
      c22 += (d[1] - m2) * (d[1] - m2) / n;
    }
    REQUIRE_THAT(c11, Catch::Matchers::WithinAbs(cfg.sigma_r * cfg.sigma_r,
                                                 5e-3));
    REQUIRE_THAT(c12, Catch::Matchers::WithinAbs(cfg.rho, 5e-4));
    REQUIRE_THAT(c22, Catch::Matchers::WithinAbs(cfg.sigma_b * cfg.sigma_b,
                                                 5e-4));
  }
}

TEST_CASE("linearized SLAM block model") {
  SlamConfig cfg;
  SlamMap map_hat{{5.0, 1.0, -2.0, 7.0}};
  const auto m = slam_linearized_block_model(map_hat, cfg);
  const SlamState pose{0.0, 0.0, 0.2};

  SECTION("fixed point: one noise-free observation at the linearization point") {
    const auto h = slam_h(pose, 5.0, 1.0);
    SlamObservation y;
    y.v = 1.0;
    y.psi = 0.0;
    y.measurements.push_back({0, h[0], h[1]});
    std::vector<double> s(m.d_stat, 0.0);
    m.statistic(pose, pose, y, s);
    const Parameter th = m.m_step(SufficientStatistic{s});
    REQUIRE_THAT(th[0], Catch::Matchers::WithinAbs(5.0, 1e-6));
    REQUIRE_THAT(th[1], Catch::Matchers::WithinAbs(1.0, 1e-6));
    // The unobserved landmark keeps its previous estimate.
    REQUIRE(th[2] == -2.0);
    REQUIRE(th[3] == 7.0);
  }

  SECTION("many observations: M-step equals a weighted least-squares oracle") {
    SlamConfig undamped = cfg;
    undamped.m_step_damping = 0.0;
    const auto mu = slam_linearized_block_model(map_hat, undamped);
    Rng rng(derive_seed(53, 0, 0));
    std::vector<double> acc(m.d_stat, 0.0), s_buf(m.d_stat);
    // Independent normal equations: sum H^T R^-1 H kappa = sum H^T R^-1 z.
    const double a = cfg.sigma_r * cfg.sigma_r;
    const double b = cfg.rho;
    const double c = cfg.sigma_b * cfg.sigma_b;
    const double det_r = a * c - b * b;
    const double i11 = c / det_r, i12 = -b / det_r, i22 = a / det_r;
    double M11 = 0, M12 = 0, M22 = 0, b1 = 0, b2 = 0;
    for (int k = 0; k < 25; ++k) {
      const SlamState x{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                        rng.uniform(-0.3, 0.3)};
      const auto h = slam_h(x, 5.0, 1.0);
      SlamObservation y;
      y.measurements.push_back(
          {0, h[0] + 0.1 * rng.normal(), h[1] + 0.02 * rng.normal()});
      m.statistic(x, x, y, s_buf);
      for (std::size_t i = 0; i < m.d_stat; ++i) acc[i] += s_buf[i];

      const auto H = slam_h_jacobian(x, 5.0, 1.0);
      const double z1 = (y.measurements[0].range - h[0]) + H[0] * 5.0 + H[1] * 1.0;
      const double z2 = wrap_angle(y.measurements[0].bearing - h[1]) +
                        H[2] * 5.0 + H[3] * 1.0;
      const double r1 = H[0] * i11 + H[2] * i12;
      const double r2 = H[0] * i12 + H[2] * i22;
      const double r3 = H[1] * i11 + H[3] * i12;
      const double r4 = H[1] * i12 + H[3] * i22;
      M11 += r1 * H[0] + r2 * H[2];
      M12 += r1 * H[1] + r2 * H[3];
      M22 += r3 * H[1] + r4 * H[3];
      b1 += r1 * z1 + r2 * z2;
      b2 += r3 * z1 + r4 * z2;
    }
    const double detM = M11 * M22 - M12 * M12;
    const double wls_x = (M22 * b1 - M12 * b2) / detM;
    const double wls_y = (M11 * b2 - M12 * b1) / detM;
    const Parameter th = mu.m_step(SufficientStatistic{acc});
    REQUIRE_THAT(th[0], Catch::Matchers::WithinAbs(wls_x, 1e-10));
    REQUIRE_THAT(th[1], Catch::Matchers::WithinAbs(wls_y, 1e-10));
  }

  SECTION("exponential-family identity with the transition offset") {
    Rng rng(derive_seed(59, 0, 0));
    for (int k = 0; k < 50; ++k) {
      const SlamState x{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0),
                        rng.uniform(-1.0, 1.0)};
      SlamObservation y;
      y.v = rng.uniform(0.5, 4.0);
      y.psi = rng.uniform(-0.3, 0.3);
      const SlamState xn =
          slam_transition_det(x, y.v, y.psi, cfg.dt, cfg.wheelbase);
      for (std::size_t lm : {0u, 1u}) {
        const auto h = slam_h(xn, map_hat.coords[2 * lm],
                              map_hat.coords[2 * lm + 1]);
        y.measurements.push_back({lm, h[0] + 0.3 * rng.normal(),
                                  wrap_angle(h[1] + 0.05 * rng.normal())});
      }
      std::vector<double> s(m.d_stat, 0.0), psi_v(m.d_stat, 0.0);
      m.statistic(x, xn, y, s);
      const Parameter probe{{rng.uniform(3.0, 7.0), rng.uniform(-1.0, 3.0),
                             rng.uniform(-4.0, 0.0), rng.uniform(5.0, 9.0)}};
      m.natural_param(probe, psi_v);
      double rhs = m.log_normalizer(probe) + m.log_offset(x, xn, y);
      for (std::size_t i = 0; i < m.d_stat; ++i) rhs += s[i] * psi_v[i];
      const double lhs = m.log_joint_increment(probe, x, xn, y);
      REQUIRE_THAT(lhs, Catch::Matchers::WithinRel(rhs, 1e-10) ||
                            Catch::Matchers::WithinAbs(rhs, 1e-10));
    }
  }
}
