// Command-line harness: data simulation, P-BOEM experiment runs, the
// variance study, and the SLAM experiment. Exit codes: 0 success, 2 config
// error, 3 degenerate-particle abort.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pboem/experiment.hpp"
#include "pboem/slam_experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDegenerate = 3;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::size_t workers = 0;     // 0: keep config value
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "configuration file")
      ->required();
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--workers", args.workers, "worker thread count");
  cmd->add_option("--seed", args.seed, "master seed (overrides config)")
      ->each([&args](const std::string&) { args.seed_set = true; });
}

pboem::ExperimentConfig load(const CommonArgs& args) {
  pboem::ExperimentConfig cfg =
      pboem::ExperimentConfig::from_file(args.config_path);
  if (args.workers > 0) cfg.workers = args.workers;
  if (args.seed_set) cfg.master_seed = args.seed;
  return cfg;
}

// Observation files, one per replication, in the experiment CSV style.
template <class State, class Obs>
void write_scalar_observations(const pboem::ModelSpec<State, Obs>& model,
                               const pboem::ExperimentConfig& cfg,
                               const std::string& out_dir) {
  const pboem::Parameter truth = model.make_parameter(cfg.truth);
  const std::size_t total = cfg.schedule.T(cfg.schedule.n_blocks);
  for (std::size_t rep = 0; rep < cfg.n_replications; ++rep) {
    auto source =
        pboem::make_simulation_source(model, truth, cfg.master_seed, rep);
    std::ofstream out(out_dir + "/observations_r" + std::to_string(rep) +
                      ".csv");
    out << "# master_seed=" << cfg.master_seed << " replication=" << rep
        << "\n";
    out << "t,y\n";
    for (std::size_t t = 1; t <= total; ++t)
      out << t << "," << pboem::format_double(static_cast<double>(source()))
          << "\n";
  }
}

void write_slam_observations(const pboem::ExperimentConfig& cfg,
                             const std::string& out_dir) {
  for (std::size_t rep = 0; rep < cfg.n_replications; ++rep) {
    const pboem::SlamTruth truth = pboem::simulate_slam_truth(cfg, rep);
    std::ofstream out(out_dir + "/observations_r" + std::to_string(rep) +
                      ".csv");
    out << "# master_seed=" << cfg.master_seed << " replication=" << rep
        << "\n";
    out << "t,v,psi,landmark,range,bearing\n";
    for (std::size_t t = 0; t < truth.obs.size(); ++t)
      for (const auto& meas : truth.obs[t].measurements)
        out << (t + 1) << "," << pboem::format_double(truth.obs[t].v) << ","
            << pboem::format_double(truth.obs[t].psi) << "," << meas.landmark
            << "," << pboem::format_double(meas.range) << ","
            << pboem::format_double(meas.bearing) << "\n";
  }
}

int cmd_simulate(const CommonArgs& args) {
  const pboem::ExperimentConfig cfg = load(args);
  std::filesystem::create_directories(args.out_dir);
  switch (cfg.kind) {
    case pboem::ModelKind::kSv:
      write_scalar_observations(pboem::models::sv_model(), cfg, args.out_dir);
      break;
    case pboem::ModelKind::kLgssm:
      write_scalar_observations(pboem::models::lgssm_model(), cfg,
                                args.out_dir);
      break;
    case pboem::ModelKind::kFiniteHmm:
      write_scalar_observations(
          pboem::models::finite_hmm_model(cfg.hmm_states, cfg.hmm_symbols),
          cfg, args.out_dir);
      break;
    case pboem::ModelKind::kSlam:
      write_slam_observations(cfg, args.out_dir);
      break;
  }
  return kExitOk;
}

int cmd_run(const CommonArgs& args) {
  const pboem::ExperimentConfig cfg = load(args);
  if (cfg.kind == pboem::ModelKind::kSlam) {
    pboem::run_slam_experiment(cfg, args.out_dir);
  } else {
    pboem::run_experiment(cfg, args.out_dir);
  }
  return kExitOk;
}

int cmd_variance_study(const CommonArgs& args, const std::string& rules_str,
                       std::size_t coordinate) {
  const pboem::ExperimentConfig cfg = load(args);
  // Rules come as label:c_N:d triples, comma separated.
  std::vector<pboem::ParticleRule> rules;
  std::string item;
  std::istringstream in(rules_str);
  while (std::getline(in, item, ',')) {
    const auto p1 = item.find(':');
    const auto p2 = item.find(':', p1 + 1);
    if (p1 == std::string::npos || p2 == std::string::npos)
      throw pboem::ConfigError("rule '" + item + "' is not label:c_N:d");
    rules.push_back({item.substr(0, p1), std::stod(item.substr(p1 + 1, p2 - p1 - 1)),
                     std::stod(item.substr(p2 + 1))});
  }
  pboem::variance_study(cfg, rules, coordinate, args.out_dir);
  return kExitOk;
}

int cmd_slam(const CommonArgs& args) {
  const pboem::ExperimentConfig cfg = load(args);
  if (cfg.kind != pboem::ModelKind::kSlam)
    throw pboem::ConfigError("slam subcommand requires experiment.model = slam");
  pboem::run_slam_experiment(cfg, args.out_dir);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming maximum-likelihood estimation for state-space HMMs"};
  app.require_subcommand(1);

  CommonArgs sim_args, run_args, var_args, slam_args;
  std::string var_rules = "sqrt:1.0:0.5,linear:1.0:1.0";
  std::size_t var_coordinate = 0;

  add_common(app.add_subcommand("simulate", "write observation files"),
             sim_args);
  add_common(app.add_subcommand("run", "run the configured experiment"),
             run_args);
  CLI::App* var = app.add_subcommand(
      "variance-study", "compare particle-count rules");
  add_common(var, var_args);
  var->add_option("--rules", var_rules,
                  "comma-separated label:c_N:d particle rules");
  var->add_option("--coordinate", var_coordinate,
                  "parameter coordinate under study (0-based)");
  add_common(app.add_subcommand("slam", "run the SLAM experiment"), slam_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (app.got_subcommand("simulate")) return cmd_simulate(sim_args);
    if (app.got_subcommand("run")) return cmd_run(run_args);
    if (app.got_subcommand("variance-study"))
      return cmd_variance_study(var_args, var_rules, var_coordinate);
    if (app.got_subcommand("slam")) return cmd_slam(slam_args);
  } catch (const pboem::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const pboem::DegenerateSystemError& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
