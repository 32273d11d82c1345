#ifndef PBOEM_EXPERIMENT_HPP
#define PBOEM_EXPERIMENT_HPP

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pboem/config.hpp"
#include "pboem/driver.hpp"
#include "pboem/math.hpp"
#include "pboem/model.hpp"
#include "pboem/models/finite_hmm.hpp"
#include "pboem/models/lgssm.hpp"
#include "pboem/models/slam.hpp"
#include "pboem/models/sv.hpp"
#include "pboem/rng.hpp"
#include "pboem/schedule.hpp"

namespace pboem {

// Stream label separating data simulation from algorithm randomness when
// deriving per-replication seeds.
inline constexpr std::uint64_t kDataStreamTag = 0xD474;

/// 17 significant digits: doubles round-trip exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

enum class ModelKind { kSv, kLgssm, kFiniteHmm, kSlam };

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "sv") return ModelKind::kSv;
  if (s == "lgssm") return ModelKind::kLgssm;
  if (s == "finite_hmm") return ModelKind::kFiniteHmm;
  if (s == "slam") return ModelKind::kSlam;
  throw ConfigError("unknown model '" + s + "'");
}

/// Parsed experiment configuration (see configs/ for documented examples).
struct ExperimentConfig {
  ModelKind kind = ModelKind::kSv;
  std::vector<double> truth;   // data-generating parameter
  std::vector<double> theta0;  // initial estimate
  BlockSchedule schedule;
  std::size_t n_replications = 1;
  std::uint64_t master_seed = 0;
  std::size_t averaging_start = 25;
  bool carry_filter = false;
  std::size_t workers = 1;
  // finite HMM dimensions
  std::size_t hmm_states = 2;
  std::size_t hmm_symbols = 2;
  // SLAM settings
  models::SlamConfig slam;
  std::size_t slam_landmarks = 15;
  std::uint64_t slam_map_seed = 20260826;
  double slam_map_init_sigma = 2.0;
  double slam_square_size = 45.0;
  double slam_velocity = 3.0;
  std::size_t slam_total_obs = 2000;
  double slam_checkpoint_fraction = 0.25;  // intermediate map snapshot

  static ExperimentConfig from_file(const std::string& path) {
    ConfigFile cfg = ConfigFile::parse_file(path);
    return from_config(cfg);
  }

  static ExperimentConfig from_config(ConfigFile& cfg) {
    ExperimentConfig ec;
    ec.kind = model_kind_from_string(cfg.get_string("experiment.model"));
    ec.n_replications =
        static_cast<std::size_t>(cfg.get_int("experiment.n_replications", 1));
    if (ec.n_replications < 1)
      throw ConfigError("experiment.n_replications must be >= 1");
    ec.master_seed = cfg.get_u64("experiment.master_seed", 0);
    ec.averaging_start = static_cast<std::size_t>(
        cfg.get_int("experiment.averaging_start", 25));
    const std::string init =
        cfg.get_string("experiment.block_init", "fixed_chi");
    if (init == "carry_filter") ec.carry_filter = true;
    else if (init != "fixed_chi")
      throw ConfigError("experiment.block_init must be fixed_chi or carry_filter");
    ec.workers =
        static_cast<std::size_t>(cfg.get_int("experiment.workers", 1));

    ec.schedule.c_tau = cfg.get_double("schedule.c_tau", 1.0);
    ec.schedule.a = cfg.get_double("schedule.a", 1.2);
    ec.schedule.c_N = cfg.get_double("schedule.c_N", 1.0);
    ec.schedule.d = cfg.get_double("schedule.d", 1.0);
    ec.schedule.constant_N =
        static_cast<std::size_t>(cfg.get_int("schedule.constant_N", 0));
    ec.schedule.n_blocks =
        static_cast<std::size_t>(cfg.get_int("schedule.n_blocks", 0));
    ec.schedule.validate();

    switch (ec.kind) {
      case ModelKind::kSv:
      case ModelKind::kLgssm:
        ec.truth = cfg.get_doubles("model.truth");
        ec.theta0 = cfg.get_doubles("model.theta0");
        break;
      case ModelKind::kFiniteHmm: {
        ec.hmm_states = static_cast<std::size_t>(cfg.get_int("model.states"));
        ec.hmm_symbols = static_cast<std::size_t>(cfg.get_int("model.symbols"));
        ec.truth = cfg.get_doubles("model.truth");
        ec.theta0 = cfg.get_doubles("model.theta0");
        break;
      }
      case ModelKind::kSlam: {
        ec.slam_landmarks =
            static_cast<std::size_t>(cfg.get_int("model.landmarks", 15));
        ec.slam_map_seed = cfg.get_u64("model.map_seed", 20260826);
        ec.slam_map_init_sigma = cfg.get_double("model.map_init_sigma", 2.0);
        ec.slam_square_size = cfg.get_double("model.square_size", 45.0);
        ec.slam_velocity = cfg.get_double("model.velocity", 3.0);
        ec.slam_total_obs = static_cast<std::size_t>(
            cfg.get_int("model.total_observations", 2000));
        ec.slam.dt = cfg.get_double("model.dt", 0.25);
        ec.slam.wheelbase = cfg.get_double("model.wheelbase", 1.5);
        ec.slam.sigma_v = cfg.get_double("model.sigma_v", 0.5);
        ec.slam.sigma_psi =
            cfg.get_double("model.sigma_psi", std::numbers::pi / 60.0);
        ec.slam.sigma_r = cfg.get_double("model.sigma_r", 0.5);
        ec.slam.sigma_b =
            cfg.get_double("model.sigma_b", std::numbers::pi / 60.0);
        ec.slam.rho = cfg.get_double("model.rho", 0.01);
        ec.slam.sensing_radius = cfg.get_double("model.sensing_radius", 15.0);
        ec.slam.sim_noise_scale = cfg.get_double("model.sim_noise_scale", 1.0);
        ec.slam.transition_jitter =
            cfg.get_double("model.transition_jitter", 1e-3);
        ec.slam.m_step_damping = cfg.get_double("model.m_step_damping", 20.0);
        ec.slam_checkpoint_fraction =
            cfg.get_double("model.checkpoint_fraction", 0.25);
        break;
      }
    }
    cfg.finish();
    return ec;
  }
};

/// Scalar-model observation stream: simulates the hidden chain under the
/// data-generating parameter, one observation per pull.
template <class State, class Obs>
std::function<Obs()> make_simulation_source(const ModelSpec<State, Obs>& model,
                                            const Parameter& truth,
                                            std::uint64_t master_seed,
                                            std::uint64_t replication) {
  auto rng = std::make_shared<Rng>(
      derive_seed(master_seed, replication, kDataStreamTag));
  auto state = std::make_shared<State>(model.sample_initial(*rng, truth));
  const Obs dummy{};
  return [&model, truth, rng, state, dummy]() {
    *state = model.sample_transition(*rng, truth, *state, dummy);
    return model.sample_emission(*rng, truth, *state);
  };
}

/// Per-replication traces plus the configuration they came from.
struct ExperimentResult {
  std::vector<std::vector<TraceRecord>> traces;  // [replication][block]
  std::size_t d_theta = 0;
};

namespace detail {

template <class Fn>
void parallel_for_replications(std::size_t n_reps, std::size_t workers, Fn fn) {
  if (workers <= 1 || n_reps <= 1) {
    for (std::size_t r = 0; r < n_reps; ++r) fn(r);
    return;
  }
  std::vector<std::thread> pool;
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr error;
  for (std::size_t w = 0; w < std::min(workers, n_reps); ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t r;
        {
          std::lock_guard lock(mu);
          if (next >= n_reps || error) return;
          r = next++;
        }
        try {
          fn(r);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

template <class State, class Obs>
ExperimentResult run_scalar_experiment(const ModelSpec<State, Obs>& model,
                                       const ExperimentConfig& cfg) {
  const Parameter truth = model.make_parameter(cfg.truth);
  const Parameter theta0 = model.make_parameter(cfg.theta0);
  ExperimentResult result;
  result.d_theta = model.d_theta;
  result.traces.resize(cfg.n_replications);
  RunOptions opts;
  opts.averaging_start = cfg.averaging_start;
  opts.carry_filter = cfg.carry_filter;
  parallel_for_replications(
      cfg.n_replications, cfg.workers, [&](std::size_t rep) {
        auto source =
            make_simulation_source(model, truth, cfg.master_seed, rep);
        result.traces[rep] = run(model, cfg.schedule, theta0, source,
                                 cfg.master_seed, rep, opts);
      });
  return result;
}

}  // namespace detail

inline ExperimentResult run_experiment_traces(const ExperimentConfig& cfg) {
  switch (cfg.kind) {
    case ModelKind::kSv:
      return detail::run_scalar_experiment(models::sv_model(), cfg);
    case ModelKind::kLgssm:
      return detail::run_scalar_experiment(models::lgssm_model(), cfg);
    case ModelKind::kFiniteHmm:
      return detail::run_scalar_experiment(
          models::finite_hmm_model(cfg.hmm_states, cfg.hmm_symbols), cfg);
    case ModelKind::kSlam:
      throw std::invalid_argument(
          "run_experiment_traces: use run_slam_experiment for slam");
  }
  throw std::logic_error("unreachable");
}

/// Write one per-replication trace CSV. Schema:
///   replication, block, T_n, tau_n, N_n, theta_1.., theta_avg_1..
inline void write_trace_csv(const std::string& path,
                            const std::vector<TraceRecord>& trace,
                            std::size_t replication, std::size_t d_theta,
                            std::uint64_t master_seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# master_seed=" << master_seed << " replication=" << replication
      << " seed_derivation=splitmix64(master,replication,block)\n";
  out << "replication,block,T_n,tau_n,N_n";
  for (std::size_t i = 1; i <= d_theta; ++i) out << ",theta_" << i;
  for (std::size_t i = 1; i <= d_theta; ++i) out << ",theta_avg_" << i;
  out << "\n";
  for (const auto& rec : trace) {
    out << replication << "," << rec.n << "," << rec.T_n << "," << rec.tau_n
        << "," << rec.N_n;
    for (double v : rec.theta) out << "," << format_double(v);
    for (double v : rec.theta_tilde) out << "," << format_double(v);
    out << "\n";
  }
}

/// Aggregate CSV: per block, median / lower / upper quartile / variance of
/// every parameter coordinate, for the plain and averaged estimators.
inline void write_aggregate_csv(const std::string& path,
                                const ExperimentResult& result,
                                std::uint64_t master_seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# master_seed=" << master_seed << "\n";
  out << "block,T_n";
  const std::size_t d = result.d_theta;
  for (const char* est : {"theta", "theta_avg"})
    for (std::size_t i = 1; i <= d; ++i)
      out << "," << est << "_" << i << "_median," << est << "_" << i
          << "_q25," << est << "_" << i << "_q75," << est << "_" << i
          << "_var";
  out << "\n";
  if (result.traces.empty()) return;
  const std::size_t n_blocks = result.traces.front().size();
  for (std::size_t b = 0; b < n_blocks; ++b) {
    out << result.traces.front()[b].n << "," << result.traces.front()[b].T_n;
    for (bool avg : {false, true}) {
      for (std::size_t i = 0; i < d; ++i) {
        std::vector<double> vals;
        vals.reserve(result.traces.size());
        for (const auto& trace : result.traces)
          vals.push_back(avg ? trace[b].theta_tilde[i] : trace[b].theta[i]);
        out << "," << format_double(median(vals)) << ","
            << format_double(quantile(vals, 0.25)) << ","
            << format_double(quantile(vals, 0.75)) << ","
            << format_double(sample_variance(vals));
      }
    }
    out << "\n";
  }
}

/// Full experiment: traces per replication plus the aggregate file, in
/// `out_dir`.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  ExperimentResult result = run_experiment_traces(cfg);
  for (std::size_t r = 0; r < result.traces.size(); ++r)
    write_trace_csv(out_dir + "/trace_r" + std::to_string(r) + ".csv",
                    result.traces[r], r, result.d_theta, cfg.master_seed);
  write_aggregate_csv(out_dir + "/aggregate.csv", result, cfg.master_seed);
  return result;
}

/// One particle-count rule for the variance study.
struct ParticleRule {
  std::string label;
  double c_N = 1.0;
  double d = 1.0;
};

/// Per-rule per-block empirical variance of one parameter coordinate, for
/// both estimators.
inline void variance_study(const ExperimentConfig& base,
                           const std::vector<ParticleRule>& rules,
                           std::size_t coordinate, const std::string& out_dir) {
  if (rules.size() < 2)
    throw std::invalid_argument("variance_study: need at least 2 rules");
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir + "/variance_study.csv");
  if (!out) throw std::runtime_error("cannot write variance_study.csv");
  out << "# master_seed=" << base.master_seed << " coordinate=" << coordinate
      << "\n";
  out << "rule,block,T_n,N_n,var_theta,var_theta_avg\n";
  for (const auto& rule : rules) {
    ExperimentConfig cfg = base;
    cfg.schedule.c_N = rule.c_N;
    cfg.schedule.d = rule.d;
    cfg.schedule.constant_N = 0;
    const ExperimentResult result = run_experiment_traces(cfg);
    const std::size_t n_blocks = result.traces.front().size();
    for (std::size_t b = 1; b < n_blocks; ++b) {
      std::vector<double> plain, avg;
      for (const auto& trace : result.traces) {
        plain.push_back(trace[b].theta[coordinate]);
        avg.push_back(trace[b].theta_tilde[coordinate]);
      }
      out << rule.label << "," << result.traces.front()[b].n << ","
          << result.traces.front()[b].T_n << ","
          << result.traces.front()[b].N_n << ","
          << format_double(sample_variance(plain)) << ","
          << format_double(sample_variance(avg)) << "\n";
    }
  }
}

}  // namespace pboem

#endif  // PBOEM_EXPERIMENT_HPP
