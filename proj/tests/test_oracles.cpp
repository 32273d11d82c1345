#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "pboem/models/finite_hmm.hpp"
#include "pboem/oracles.hpp"
#include "pboem/rng.hpp"

using namespace pboem;

namespace {

// Random row-stochastic 2x2 tables, entries bounded away from zero.
Parameter random_hmm2_parameter(const ModelSpec<int, int>& model, Rng& rng) {
  auto row = [&rng]() {
    const double p = rng.uniform(0.1, 0.9);
    return std::pair{p, 1.0 - p};
  };
  const auto [a1, a2] = row();
  const auto [b1, b2] = row();
  const auto [e1, e2] = row();
  const auto [f1, f2] = row();
  return models::finite_hmm_parameter(model, {a1, a2, b1, b2},
                                      {e1, e2, f1, f2});
}

// Dense-Gaussian oracle for the scalar LGSSM: build the (tau+1)-dimensional
// prior covariance of X_{0:tau}, condition on Y = X_{1:tau} + noise via the
// joint-normal formula, read off the posterior moments. O(tau^3), test-only.
struct DenseGaussian {
  std::vector<double> mean;         // posterior mean of X_{0:tau}
  std::vector<std::vector<double>> cov;
};

DenseGaussian dense_lgssm_posterior(double phi, double q, double r,
                                    const std::vector<double>& y) {
  const std::size_t tau = y.size();
  const std::size_t n = tau + 1;
  // Prior: Cov(X_s, X_t) = phi^|s-t| q / (1 - phi^2).
  const double v = q / (1.0 - phi * phi);
  std::vector<std::vector<double>> P(n, std::vector<double>(n));
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < n; ++t)
      P[s][t] = v * std::pow(phi, std::abs(static_cast<double>(s) -
                                           static_cast<double>(t)));
  // S_yy = P[1:,1:] + r I,  S_xy = P[:,1:].
  std::vector<std::vector<double>> Syy(tau, std::vector<double>(tau));
  for (std::size_t s = 0; s < tau; ++s)
    for (std::size_t t = 0; t < tau; ++t)
      Syy[s][t] = P[s + 1][t + 1] + (s == t ? r : 0.0);
  // Invert Syy by Gauss-Jordan.
  std::vector<std::vector<double>> inv(tau, std::vector<double>(tau, 0.0));
  for (std::size_t i = 0; i < tau; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < tau; ++col) {
    std::size_t piv = col;
    for (std::size_t rr = col + 1; rr < tau; ++rr)
      if (std::abs(Syy[rr][col]) > std::abs(Syy[piv][col])) piv = rr;
    std::swap(Syy[col], Syy[piv]);
    std::swap(inv[col], inv[piv]);
    const double diag = Syy[col][col];
    for (std::size_t c = 0; c < tau; ++c) {
      Syy[col][c] /= diag;
      inv[col][c] /= diag;
    }
    for (std::size_t rr = 0; rr < tau; ++rr) {
      if (rr == col) continue;
      const double f = Syy[rr][col];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < tau; ++c) {
        Syy[rr][c] -= f * Syy[col][c];
        inv[rr][c] -= f * inv[col][c];
      }
    }
  }
  // mean = S_xy inv(S_yy) y; cov = P - S_xy inv(S_yy) S_xy^T.
  DenseGaussian out;
  out.mean.assign(n, 0.0);
  out.cov.assign(n, std::vector<double>(n, 0.0));
  std::vector<std::vector<double>> K(n, std::vector<double>(tau, 0.0));
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < tau; ++t)
      for (std::size_t k = 0; k < tau; ++k)
        K[s][t] += P[s][k + 1] * inv[k][t];
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < tau; ++t) out.mean[s] += K[s][t] * y[t];
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < n; ++t) {
      double acc = 0.0;
      for (std::size_t k = 0; k < tau; ++k) acc += K[s][k] * P[k + 1][t];
      out.cov[s][t] = P[s][t] - acc;
    }
  return out;
}

}  // namespace

TEST_CASE("forward-backward equals brute force on random 2-state instances") {
  auto model = models::finite_hmm_model(2, 2);
  Rng rng(derive_seed(21, 0, 0));
  for (int trial = 0; trial < 20; ++trial) {
    const Parameter th = random_hmm2_parameter(model, rng);
    const std::size_t tau = 1 + rng.uniform_index(6);
    std::vector<int> y(tau);
    for (auto& obs : y) obs = static_cast<int>(rng.uniform_index(2));
    const auto a = exact_statistic_finite(model, th, std::span<const int>(y));
    const auto b = brute_force_statistic(model, th, std::span<const int>(y));
    for (std::size_t i = 0; i < model.d_stat; ++i)
      REQUIRE_THAT(a[i], Catch::Matchers::WithinAbs(b[i], 1e-12));
  }
}

TEST_CASE("tau = 1 pairwise posterior against a hand computation") {
  auto model = models::finite_hmm_model(2, 2);
  const Parameter th = models::finite_hmm_parameter(
      model, {0.8, 0.2, 0.3, 0.7}, {0.9, 0.1, 0.2, 0.8});
  const std::vector<int> y = {0};
  // p(x0 = i, x1 = j | y) proportional to chi_i A_ij B_j(y), chi uniform.
  double pair[2][2];
  double z = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      pair[i][j] = 0.5 * th[i * 2 + j] * th[4 + j * 2 + 0];
      z += pair[i][j];
    }
  std::vector<double> expect(model.d_stat, 0.0), s_buf(model.d_stat);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      model.statistic(i, j, 0, s_buf);
      for (std::size_t k = 0; k < model.d_stat; ++k)
        expect[k] += pair[i][j] / z * s_buf[k];
    }
  const auto got = exact_statistic_finite(model, th, std::span<const int>(y));
  for (std::size_t k = 0; k < model.d_stat; ++k)
    REQUIRE_THAT(got[k], Catch::Matchers::WithinAbs(expect[k], 1e-14));
}

TEST_CASE("uniform kernels give the uniform pair average") {
  auto model = models::finite_hmm_model(2, 2);
  const Parameter th = models::finite_hmm_parameter(
      model, {0.5, 0.5, 0.5, 0.5}, {0.5, 0.5, 0.5, 0.5});
  const std::vector<int> y = {0, 1, 0};
  const auto got = exact_statistic_finite(model, th, std::span<const int>(y));
  // Transition indicators: each of the 4 pairs has posterior 1/4 at every t.
  for (std::size_t k = 0; k < 4; ++k)
    REQUIRE_THAT(got[k], Catch::Matchers::WithinAbs(0.25, 1e-14));
}

TEST_CASE("brute force edge cases") {
  auto model = models::finite_hmm_model(2, 2);
  const Parameter th = models::finite_hmm_parameter(
      model, {0.8, 0.2, 0.3, 0.7}, {0.9, 0.1, 0.2, 0.8});
  SECTION("tau = 0 returns the zero vector") {
    const auto s =
        brute_force_statistic(model, th, std::span<const int>());
    for (std::size_t i = 0; i < model.d_stat; ++i) REQUIRE(s[i] == 0.0);
  }
  SECTION("size guard") {
    const std::vector<int> y(25, 0);
    REQUIRE_THROWS_AS(
        brute_force_statistic(model, th, std::span<const int>(y)),
        std::invalid_argument);
  }
  SECTION("deterministic chain follows the forced path") {
    // 0 -> 1 -> 0 -> 1 ... with certainty; chi = point mass at 0.
    auto det = models::finite_hmm_model(2, 2, {1.0, 0.0});
    const Parameter thd = models::finite_hmm_parameter(
        det, {0.0, 1.0, 1.0, 0.0}, {0.6, 0.4, 0.3, 0.7});
    const std::vector<int> y = {0, 1, 1};
    const auto s = brute_force_statistic(det, thd, std::span<const int>(y));
    // Forced path x = (0, 1, 0, 1): transitions (0,1), (1,0), (0,1).
    std::vector<double> expect(det.d_stat, 0.0), buf(det.d_stat);
    const int path[4] = {0, 1, 0, 1};
    for (int t = 1; t <= 3; ++t) {
      det.statistic(path[t - 1], path[t], y[t - 1], buf);
      for (std::size_t i = 0; i < det.d_stat; ++i) expect[i] += buf[i] / 3.0;
    }
    for (std::size_t i = 0; i < det.d_stat; ++i)
      REQUIRE_THAT(s[i], Catch::Matchers::WithinAbs(expect[i], 1e-12));
  }
}

TEST_CASE("exact statistic is invariant to emission rescaling") {
  auto model = models::finite_hmm_model(2, 2);
  const Parameter th = models::finite_hmm_parameter(
      model, {0.8, 0.2, 0.3, 0.7}, {0.9, 0.1, 0.2, 0.8});
  Rng rng(derive_seed(22, 0, 0));
  const std::vector<int> y = {0, 1, 1, 0, 1};
  const auto base = exact_statistic_finite(model, th, std::span<const int>(y));
  for (int trial = 0; trial < 5; ++trial) {
    // Rescale g(., y) by a per-symbol positive constant: the smoothed
    // statistic is a ratio and must not move.
    const double c0 = rng.uniform(0.1, 5.0), c1 = rng.uniform(0.1, 5.0);
    auto scaled = model;
    auto inner = model.log_emission;
    scaled.log_emission = [inner, c0, c1](const Parameter& p, const int& x,
                                          const int& obs) {
      return inner(p, x, obs) + std::log(obs == 0 ? c0 : c1);
    };
    const auto got =
        exact_statistic_finite(scaled, th, std::span<const int>(y));
    for (std::size_t i = 0; i < model.d_stat; ++i)
      REQUIRE_THAT(got[i], Catch::Matchers::WithinAbs(base[i], 1e-12));
  }
}

TEST_CASE("Kalman/RTS smoother matches dense-Gaussian conditioning") {
  const double phi = 0.7, q = 0.4, r = 0.3;
  std::vector<double> y;
  Rng rng(derive_seed(23, 0, 0));
  double x = rng.normal(0.0, std::sqrt(q / (1 - phi * phi)));
  for (int t = 0; t < 50; ++t) {
    x = phi * x + std::sqrt(q) * rng.normal();
    y.push_back(x + std::sqrt(r) * rng.normal());
  }
  const auto sm = lgssm_smooth(phi, q, r, y);
  const auto dense = dense_lgssm_posterior(phi, q, r, y);
  for (std::size_t t = 0; t <= 50; ++t) {
    REQUIRE_THAT(sm.mean[t], Catch::Matchers::WithinAbs(dense.mean[t], 1e-8));
    REQUIRE_THAT(sm.var[t], Catch::Matchers::WithinAbs(dense.cov[t][t], 1e-8));
    if (t >= 1)
      REQUIRE_THAT(sm.lag_cov[t],
                   Catch::Matchers::WithinAbs(dense.cov[t - 1][t], 1e-8));
  }

  // The assembled statistic agrees with the same moments.
  const auto s = exact_statistic_lgssm(phi, q, r, y);
  std::vector<double> expect(5, 0.0);
  for (std::size_t t = 1; t <= 50; ++t) {
    expect[0] += dense.mean[t - 1] * dense.mean[t - 1] + dense.cov[t - 1][t - 1];
    expect[1] += dense.mean[t] * dense.mean[t] + dense.cov[t][t];
    expect[2] += dense.mean[t - 1] * dense.mean[t] + dense.cov[t - 1][t];
    expect[3] += dense.mean[t] * y[t - 1];
    expect[4] += y[t - 1] * y[t - 1];
  }
  for (auto& v : expect) v /= 50.0;
  for (std::size_t i = 0; i < 5; ++i)
    REQUIRE_THAT(s[i], Catch::Matchers::WithinAbs(expect[i], 1e-8));
}

TEST_CASE("white-noise state: lag-one smoothed covariance vanishes") {
  const double q = 0.5, r = 0.2;
  std::vector<double> y = {0.3, -0.7, 1.1, 0.4};
  const auto sm = lgssm_smooth(0.0, q, r, y);
  for (std::size_t t = 1; t <= y.size(); ++t)
    REQUIRE_THAT(sm.lag_cov[t], Catch::Matchers::WithinAbs(0.0, 1e-14));
  // Cross moment reduces to the product of independent posterior means.
  const auto s = exact_statistic_lgssm(0.0, q, r, y);
  double expect = 0.0;
  for (std::size_t t = 1; t <= y.size(); ++t)
    expect += sm.mean[t - 1] * sm.mean[t];
  expect /= static_cast<double>(y.size());
  REQUIRE_THAT(s[2], Catch::Matchers::WithinAbs(expect, 1e-14));
}

TEST_CASE("near-noiseless observations pin the smoothed states to the data") {
  const double phi = 0.5, q = 1.0, r = 1e-12;
  const std::vector<double> y = {1.0, -2.0, 0.5};
  const auto sm = lgssm_smooth(phi, q, r, y);
  for (std::size_t t = 1; t <= y.size(); ++t)
    REQUIRE_THAT(sm.mean[t], Catch::Matchers::WithinAbs(y[t - 1], 1e-6));
}
