#ifndef PBOEM_SLAM_EXPERIMENT_HPP
#define PBOEM_SLAM_EXPERIMENT_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "pboem/driver.hpp"
#include "pboem/experiment.hpp"
#include "pboem/models/slam.hpp"

namespace pboem {

/// Ground truth for one SLAM run: landmark map, control sequence, true path
/// and observations. The map is drawn once from the documented map seed; the
/// path and measurement noise vary per replication.
struct SlamTruth {
  models::SlamMap map;
  models::SlamState start;
  std::vector<models::SlamState> path;       // poses 1..T
  std::vector<models::SlamObservation> obs;  // observations 1..T
};

/// Landmarks uniform in the configured square, from the map seed only.
inline models::SlamMap make_slam_map(std::size_t q, double square,
                                     std::uint64_t map_seed) {
  Rng rng(derive_seed(map_seed, 0, 0));
  models::SlamMap map;
  map.coords.reserve(2 * q);
  for (std::size_t i = 0; i < 2 * q; ++i)
    map.coords.push_back(rng.uniform(0.0, square));
  return map;
}

/// Default exploration loop: constant velocity, slowly oscillating steering,
/// starting below the square's center.
inline void slam_controls(const ExperimentConfig& cfg, std::size_t t,
                          double& v, double& psi) {
  v = cfg.slam_velocity;
  psi = 0.15 + 0.05 * std::sin(2.0 * std::numbers::pi *
                               static_cast<double>(t) / 400.0);
}

inline SlamTruth simulate_slam_truth(const ExperimentConfig& cfg,
                                     std::uint64_t replication) {
  SlamTruth truth;
  truth.map =
      make_slam_map(cfg.slam_landmarks, cfg.slam_square_size, cfg.slam_map_seed);
  truth.start = {cfg.slam_square_size / 2.0, cfg.slam_square_size / 4.0, 0.0};
  Rng rng(derive_seed(cfg.master_seed, replication, kDataStreamTag));
  models::SlamState pose = truth.start;
  for (std::size_t t = 1; t <= cfg.slam_total_obs; ++t) {
    double v, psi;
    slam_controls(cfg, t, v, psi);
    pose = models::slam_transition(pose, v, psi, rng, cfg.slam);
    std::vector<std::size_t> visible;
    for (std::size_t i = 0; i < truth.map.size(); ++i) {
      const double dx = truth.map.coords[2 * i] - pose.x;
      const double dy = truth.map.coords[2 * i + 1] - pose.y;
      if (std::hypot(dx, dy) <= cfg.slam.sensing_radius) visible.push_back(i);
    }
    truth.path.push_back(pose);
    truth.obs.push_back(
        models::slam_observe(pose, truth.map, visible, v, psi, rng, cfg.slam));
  }
  return truth;
}

struct SlamRunResult {
  std::vector<double> map_checkpoint;  // estimate when T first reaches the checkpoint
  std::vector<double> map_final;
  std::vector<double> map_final_avg;
  std::vector<models::SlamState> path;  // per-step weighted particle means
  std::size_t checkpoint_T = 0;
  std::size_t final_T = 0;
};

/// One replication of the P-BOEM SLAM run: per block, rebuild the linearized
/// model at the current map estimate, run the forward SMC smoother with the
/// pose filter carried across blocks, then update the map and its averaged
/// version.
inline SlamRunResult run_slam_replication(const ExperimentConfig& cfg,
                                          std::uint64_t replication,
                                          const SlamTruth& truth) {
  using models::SlamObservation;
  using models::SlamState;

  const std::size_t total = cfg.slam_total_obs;
  const auto checkpoint = static_cast<std::size_t>(
      cfg.slam_checkpoint_fraction * static_cast<double>(total));

  // Initial map estimate: truth perturbed by per-replication noise.
  Rng init_rng(derive_seed(cfg.master_seed, replication, 0xB00));
  models::SlamMap map_hat = truth.map;
  for (double& c : map_hat.coords)
    c += cfg.slam_map_init_sigma * init_rng.normal();

  SlamRunResult result;
  std::vector<double> sigma_tilde(models::slam_stat_dim(truth.map.size()), 0.0);
  std::vector<double> map_avg = map_hat.coords;

  std::size_t consumed = 0;
  auto source = [&truth, &consumed]() -> SlamObservation {
    if (consumed >= truth.obs.size()) throw StreamExhausted();
    return truth.obs[consumed++];
  };

  ParticleSystem<SlamState> carried;
  bool have_carry = false;
  std::size_t T = 0;
  std::size_t T_avg = 0;  // observations aggregated into sigma_tilde
  for (std::size_t n = 1; T < total; ++n) {
    std::size_t tau = cfg.schedule.tau(n);
    if (T + tau > total) tau = total - T;
    const std::size_t N = cfg.schedule.N(n);
    Rng rng(derive_seed(cfg.master_seed, replication, n));

    const auto model = models::slam_linearized_block_model(map_hat, cfg.slam);
    const Parameter theta = Parameter{map_hat.coords};
    auto kernel = make_bootstrap_kernel(model, theta);

    ParticleSystem<SlamState> init;
    if (have_carry) {
      init = carried;
    } else {
      // Known initial pose: point mass at the true start.
      init.particles.assign(N, truth.start);
      init.log_weights.assign(N, -std::log(static_cast<double>(N)));
      init.ancestors.resize(N);
      for (std::size_t i = 0; i < N; ++i) init.ancestors[i] = i;
    }

    std::function<void(const ParticleSystem<SlamState>&)> observer =
        [&result](const ParticleSystem<SlamState>& ps) {
      const std::vector<double> w = ps.weights();
      SlamState mean{};
      double ch = 0.0, sh = 0.0;
      for (std::size_t l = 0; l < ps.size(); ++l) {
        mean.x += w[l] * ps.particles[l].x;
        mean.y += w[l] * ps.particles[l].y;
        ch += w[l] * std::cos(ps.particles[l].heading);
        sh += w[l] * std::sin(ps.particles[l].heading);
      }
          mean.heading = std::atan2(sh, ch);
          result.path.push_back(mean);
        };

    SufficientStatistic s_tilde =
        run_block(model, theta, kernel, std::function<SlamObservation()>(source),
                  tau, N, rng, static_cast<long>(n), &init, observer, &carried);
    have_carry = true;

    // Plain update and tau-weighted average (same recursion as pboem_update;
    // the model object changes each block, so the loop is explicit here).
    // Only blocks after averaging_start enter the average: a late start must
    // exclude the warm-up transient.
    const Parameter theta_next = model.m_step(s_tilde);
    T += tau;
    map_hat.coords = theta_next.value;
    if (n > cfg.averaging_start) {
      const auto T_next = static_cast<double>(T_avg + tau);
      const double w_old = static_cast<double>(T_avg) / T_next;
      const double w_new = static_cast<double>(tau) / T_next;
      for (std::size_t i = 0; i < sigma_tilde.size(); ++i)
        sigma_tilde[i] = w_old * sigma_tilde[i] + w_new * s_tilde[i];
      T_avg += tau;
      map_avg = model.m_step(SufficientStatistic{sigma_tilde}).value;
    } else {
      map_avg = map_hat.coords;
    }

    if (result.map_checkpoint.empty() && T >= checkpoint) {
      // Snapshot the estimate a user would read off at this point in the
      // stream: the averaged map once averaging is active, else the plain one.
      result.map_checkpoint = map_avg;
      result.checkpoint_T = T;
    }
  }
  result.map_final = map_hat.coords;
  result.map_final_avg = map_avg;
  result.final_T = T;
  return result;
}

/// Full SLAM experiment: per-replication estimated path and final map, plus
/// an aggregate per-landmark distance-to-truth table.
inline std::vector<SlamRunResult> run_slam_experiment(
    const ExperimentConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<SlamRunResult> results(cfg.n_replications);
  std::vector<SlamTruth> truths(cfg.n_replications);
  detail::parallel_for_replications(
      cfg.n_replications, cfg.workers, [&](std::size_t rep) {
        truths[rep] = simulate_slam_truth(cfg, rep);
        results[rep] = run_slam_replication(cfg, rep, truths[rep]);
      });

  const models::SlamMap map = make_slam_map(
      cfg.slam_landmarks, cfg.slam_square_size, cfg.slam_map_seed);
  for (std::size_t rep = 0; rep < results.size(); ++rep) {
    std::ofstream pf(out_dir + "/path_r" + std::to_string(rep) + ".csv");
    pf << "# master_seed=" << cfg.master_seed << " replication=" << rep << "\n";
    pf << "t,x,y,heading\n";
    for (std::size_t t = 0; t < results[rep].path.size(); ++t) {
      const auto& p = results[rep].path[t];
      pf << (t + 1) << "," << format_double(p.x) << "," << format_double(p.y)
         << "," << format_double(p.heading) << "\n";
    }
    std::ofstream mf(out_dir + "/map_r" + std::to_string(rep) + ".csv");
    mf << "# master_seed=" << cfg.master_seed << " replication=" << rep << "\n";
    mf << "landmark,true_x,true_y,est_x,est_y,est_avg_x,est_avg_y\n";
    for (std::size_t i = 0; i < map.size(); ++i)
      mf << i << "," << format_double(map.coords[2 * i]) << ","
         << format_double(map.coords[2 * i + 1]) << ","
         << format_double(results[rep].map_final[2 * i]) << ","
         << format_double(results[rep].map_final[2 * i + 1]) << ","
         << format_double(results[rep].map_final_avg[2 * i]) << ","
         << format_double(results[rep].map_final_avg[2 * i + 1]) << "\n";
  }

  std::ofstream af(out_dir + "/landmark_errors.csv");
  af << "# master_seed=" << cfg.master_seed << "\n";
  af << "landmark,mean_error_checkpoint,mean_error_final,mean_error_final_avg\n";
  for (std::size_t i = 0; i < map.size(); ++i) {
    double ec = 0.0, ef = 0.0, ea = 0.0;
    for (const auto& r : results) {
      auto dist = [&](const std::vector<double>& est) {
        return std::hypot(est[2 * i] - map.coords[2 * i],
                          est[2 * i + 1] - map.coords[2 * i + 1]);
      };
      ec += dist(r.map_checkpoint);
      ef += dist(r.map_final);
      ea += dist(r.map_final_avg);
    }
    const auto n = static_cast<double>(results.size());
    af << i << "," << format_double(ec / n) << "," << format_double(ef / n)
       << "," << format_double(ea / n) << "\n";
  }
  return results;
}

}  // namespace pboem

#endif  // PBOEM_SLAM_EXPERIMENT_HPP
