#ifndef PBOEM_MODELS_FINITE_HMM_HPP
#define PBOEM_MODELS_FINITE_HMM_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "pboem/model.hpp"

namespace pboem::models {

/// Finite-state HMM with K states and M observation symbols. The parameter is
/// the row-stochastic transition matrix A (K*K, row-major) followed by the
/// emission matrix B (K*M, row-major). The initial distribution chi is fixed
/// at construction. The statistic collects transition and emission indicator
/// frequencies; the M-step row-normalizes them.
inline ModelSpec<int, int> finite_hmm_model(std::size_t K, std::size_t M,
                                            std::vector<double> chi = {}) {
  if (K == 0 || M == 0)
    throw std::invalid_argument("finite_hmm_model: K and M must be >= 1");
  if (chi.empty()) chi.assign(K, 1.0 / static_cast<double>(K));
  if (chi.size() != K)
    throw std::invalid_argument("finite_hmm_model: chi has wrong size");
  double chi_sum = 0.0;
  for (double p : chi) {
    if (p < 0.0) throw std::invalid_argument("finite_hmm_model: chi < 0");
    chi_sum += p;
  }
  if (std::abs(chi_sum - 1.0) > 1e-9)
    throw std::invalid_argument("finite_hmm_model: chi does not sum to 1");

  ModelSpec<int, int> m;
  m.n_states = K;
  m.d_theta = K * K + K * M;
  m.d_stat = K * K + K * M;
  m.theta_lower.assign(m.d_theta, 0.0);
  m.theta_upper.assign(m.d_theta, 1.0);

  m.sample_initial = [chi, K](Rng& rng, const Parameter&) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
      acc += chi[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(K - 1);
  };
  m.log_initial = [chi](const Parameter&, const int& x) {
    return std::log(chi[static_cast<std::size_t>(x)]);
  };
  m.log_transition = [K](const Parameter& th, const int& i, const int& j,
                         const int&) {
    return std::log(th[static_cast<std::size_t>(i) * K +
                       static_cast<std::size_t>(j)]);
  };
  m.sample_transition = [K](Rng& rng, const Parameter& th, const int& i,
                            const int&) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      acc += th[static_cast<std::size_t>(i) * K + j];
      if (u < acc) return static_cast<int>(j);
    }
    return static_cast<int>(K - 1);
  };
  m.log_emission = [K, M](const Parameter& th, const int& j, const int& y) {
    return std::log(th[K * K + static_cast<std::size_t>(j) * M +
                       static_cast<std::size_t>(y)]);
  };
  m.sample_emission = [K, M](Rng& rng, const Parameter& th, const int& j) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t y = 0; y < M; ++y) {
      acc += th[K * K + static_cast<std::size_t>(j) * M + y];
      if (u < acc) return static_cast<int>(y);
    }
    return static_cast<int>(M - 1);
  };
  m.statistic = [K, M](const int& i, const int& j, const int& y,
                       std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    out[static_cast<std::size_t>(i) * K + static_cast<std::size_t>(j)] = 1.0;
    out[K * K + static_cast<std::size_t>(j) * M + static_cast<std::size_t>(y)] =
        1.0;
  };
  m.m_step_raw = [K, M](const SufficientStatistic& s) {
    std::vector<double> th(K * K + K * M);
    for (std::size_t i = 0; i < K; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < K; ++j) row += s[i * K + j];
      if (!(row > 0.0))
        throw std::domain_error("finite_hmm m_step: empty transition row");
      for (std::size_t j = 0; j < K; ++j) th[i * K + j] = s[i * K + j] / row;
    }
    for (std::size_t j = 0; j < K; ++j) {
      double row = 0.0;
      for (std::size_t y = 0; y < M; ++y) row += s[K * K + j * M + y];
      if (!(row > 0.0))
        throw std::domain_error("finite_hmm m_step: empty emission row");
      for (std::size_t y = 0; y < M; ++y)
        th[K * K + j * M + y] = s[K * K + j * M + y] / row;
    }
    return th;
  };
  m.stat_in_domain = [](const SufficientStatistic& s) {
    // Strict interior: a zero cell would make the M-step emit a hard-zero
    // probability, which later blocks cannot recover from (every particle
    // weight vanishes the first time that symbol or transition occurs).
    for (double x : s.value)
      if (!(x > 0.0)) return false;
    return true;
  };
  m.project_stat = [](const SufficientStatistic& s) {
    std::vector<double> v = s.value;
    for (double& x : v) x = std::max(x, 0.0) + 1e-12;
    return SufficientStatistic{std::move(v)};
  };
  m.log_normalizer = [](const Parameter&) { return 0.0; };
  m.natural_param = [](const Parameter& th, std::span<double> out) {
    for (std::size_t i = 0; i < th.size(); ++i) out[i] = std::log(th[i]);
  };
  return m;
}

/// Row-stochastic parameter construction; rejects non-stochastic tables.
inline Parameter finite_hmm_parameter(const ModelSpec<int, int>& model,
                                      const std::vector<double>& A,
                                      const std::vector<double>& B) {
  const std::size_t K = model.n_states;
  const std::size_t M = (model.d_theta - K * K) / K;
  if (A.size() != K * K || B.size() != K * M)
    throw std::invalid_argument("finite_hmm_parameter: table size mismatch");
  auto check_rows = [](const std::vector<double>& tab, std::size_t rows,
                       std::size_t cols, const char* name) {
    for (std::size_t i = 0; i < rows; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        if (tab[i * cols + j] < 0.0)
          throw std::invalid_argument(std::string(name) + ": negative entry");
        row += tab[i * cols + j];
      }
      if (std::abs(row - 1.0) > 1e-9)
        throw std::invalid_argument(std::string(name) +
                                    ": row does not sum to 1");
    }
  };
  check_rows(A, K, K, "transition table");
  check_rows(B, K, M, "emission table");
  std::vector<double> th;
  th.reserve(model.d_theta);
  th.insert(th.end(), A.begin(), A.end());
  th.insert(th.end(), B.begin(), B.end());
  return model.make_parameter(std::move(th));
}

}  // namespace pboem::models

#endif  // PBOEM_MODELS_FINITE_HMM_HPP
