#ifndef PCC_CLI_HPP
#define PCC_CLI_HPP

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pcc/errors.hpp"
#include "pcc/evaluation.hpp"
#include "pcc/inference.hpp"
#include "pcc/io.hpp"
#include "pcc/movement_model.hpp"
#include "pcc/network.hpp"

namespace pcc {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitNumerical = 2 };

namespace cli_detail {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out_dir = ".";
  bool csv = false;
};

struct Overrides {
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> burn_in;
  std::optional<std::size_t> grid_points;
};

inline RunConfig resolve(const Common& common, const Overrides& o) {
  RunConfig cfg = common.config.empty() ? RunConfig{} : load_run_config(common.config);
  if (common.seed) cfg.seed = *common.seed;
  if (o.iterations) cfg.mcmc.iterations = *o.iterations;
  if (o.burn_in) cfg.mcmc.burn_in = *o.burn_in;
  if (o.grid_points) cfg.grid_points = *o.grid_points;
  if (common.csv) cfg.io.binary = false;
  cfg.validate();
  return cfg;
}

inline std::filesystem::path output(const Common& common, const std::string& name) {
  std::filesystem::create_directories(common.out_dir);
  return std::filesystem::path(common.out_dir) / name;
}

inline std::ofstream open(const Common& common, const std::string& name, bool binary = false) {
  const auto path = output(common, name);
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

inline std::string tag(ModelVariant v) { return v == ModelVariant::dependent ? "ip-dep" : "ip-ind"; }

inline void write_arrays(const Common& common, const RunConfig& cfg, const std::string& stem,
                         const ArrayBundle& arrays) {
  if (cfg.io.binary) {
    auto out = open(common, stem + ".pcca", true);
    write_array_binary(out, arrays);
  } else {
    auto out = open(common, stem + ".csv");
    write_array_csv(out, arrays);
  }
}

inline Telemetry read_data(const std::string& path, const RunConfig& cfg) {
  Telemetry data = load_telemetry(path, TelemetryOptions{cfg.io.gap_factor});
  std::cerr << ingestion_summary(data);
  return data;
}

inline PosteriorChain fit(const Telemetry& data, const RunConfig& cfg, ModelVariant variant) {
  std::cerr << "fitting " << variant_name(variant) << " (" << cfg.mcmc.iterations << " iterations)\n";
  PosteriorChain chain = run_mcmc(data, cfg.priors, cfg.mcmc_config(variant));
  for (const auto& w : chain.warnings) std::cerr << "warning: " << variant_name(variant) << ": " << w << '\n';
  return chain;
}

inline int run_simulate(const Common& common, const Overrides& o, std::optional<std::size_t> individuals,
                        std::optional<std::size_t> observations, std::optional<double> w12) {
  RunConfig cfg = resolve(common, o);
  if (individuals) cfg.simulate.individuals = *individuals;
  if (observations) cfg.simulate.observations = *observations;
  if (w12) cfg.simulate.w12 = *w12;
  cfg.validate();
  const TimeGrid grid = make_grid(0.0, 1.0, cfg.grid_points);
  Rng rng(derive_seed(cfg.seed, {0}));
  const std::size_t p = cfg.simulate.individuals;
  std::vector<std::vector<double>> times(p);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& t : times) {
    for (std::size_t k = 0; k < cfg.simulate.observations; ++k) t.push_back(unit(rng));
    std::sort(t.begin(), t.end());
  }
  Eigen::MatrixXd w = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p), cfg.simulate.w12);
  w.diagonal().setOnes();
  const SimulationResult sim = simulate(cfg.truth_params(), SocialNetwork::constant(grid, w), grid, times, rng, cfg.chain);
  {
    auto out = open(common, "telemetry.csv");
    write_telemetry(out, sim.data);
  }
  auto out = open(common, "truth.csv");
  out << "id,time,x,y\n";
  for (std::size_t i = 0; i < p; ++i) {
    const Eigen::MatrixXd path = sim.true_positions(i);
    for (std::size_t k = 0; k < grid.size(); ++k)
      out << sim.data.tracks[i].id << ',' << format_double(grid[k]) << ','
          << format_double(path(static_cast<Eigen::Index>(k), 0)) << ','
          << format_double(path(static_cast<Eigen::Index>(k), 1)) << '\n';
  }
  std::cerr << "wrote " << sim.data.total() << " observations for " << p << " individuals\n";
  return kExitOk;
}

inline std::vector<ModelVariant> variants(const std::string& model) {
  if (model == "dep") return {ModelVariant::dependent};
  if (model == "ind") return {ModelVariant::independent};
  return {ModelVariant::dependent, ModelVariant::independent};
}

inline int run_fit(const Common& common, const Overrides& o, const std::string& data_path, const std::string& model) {
  const RunConfig cfg = resolve(common, o);
  const Telemetry data = read_data(data_path, cfg);
  std::map<ModelVariant, std::vector<ParameterSummary>> summaries;
  for (ModelVariant v : variants(model)) {
    const PosteriorChain chain = fit(data, cfg, v);
    {
      auto out = open(common, "chain_" + tag(v) + ".csv");
      write_chain_csv(out, chain);
    }
    if (v == ModelVariant::dependent) write_arrays(common, cfg, "latent_" + tag(v), chain_latent_arrays(chain));
    summaries[v] = summarize_chain(chain);
    auto out = open(common, "summary_" + tag(v) + ".csv");
    write_fit_summary(out, summaries[v], v);
    write_fit_summary(std::cout, summaries[v], v);
  }
  if (summaries.size() == 2) {
    auto out = open(common, "summary_comparison.csv");
    write_fit_comparison(out, summaries[ModelVariant::dependent], summaries[ModelVariant::independent]);
  }
  return kExitOk;
}

inline int run_reconstruct(const Common& common, const Overrides& o, const std::string& data_path,
                           std::optional<std::size_t> draws) {
  RunConfig cfg = resolve(common, o);
  if (draws) cfg.io.draws = *draws;
  cfg.validate();
  const Telemetry data = read_data(data_path, cfg);
  const TimeGrid grid = make_grid(0.0, 1.0, cfg.grid_points);
  const std::size_t p = data.individuals();
  const auto m = static_cast<Eigen::Index>(grid.size());

  // radii[v](k, i) and means[v] (p*m x 2) on the grid
  std::map<ModelVariant, Eigen::MatrixXd> radii, means;
  for (ModelVariant v : {ModelVariant::dependent, ModelVariant::independent}) {
    const PosteriorChain chain = fit(data, cfg, v);
    const std::size_t n_draws = std::min(cfg.io.draws, chain.records.size());
    ArrayBundle joined{p, std::vector<Eigen::MatrixXd>(n_draws * p)};
    radii[v].resize(m, static_cast<Eigen::Index>(p));
    means[v].resize(static_cast<Eigen::Index>(p) * m, 2);
    for (std::size_t i = 0; i < p; ++i) {
      std::vector<Node> pred;
      for (std::size_t k = 0; k < grid.size(); ++k) pred.push_back({i, grid[k]});
      Rng rng(derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(v), i}));
      const auto path_draws = composition_samples(chain, data, pred, rng, cfg.io.draws);
      radii[v].col(static_cast<Eigen::Index>(i)) = credible_radii(path_draws, 0.95);
      means[v].middleRows(static_cast<Eigen::Index>(i) * m, m) = path_mean(path_draws);
      for (std::size_t d = 0; d < n_draws; ++d) joined.arrays[d * p + i] = path_draws[d];
    }
    write_arrays(common, cfg, "draws_" + tag(v), joined);
  }

  auto out = open(common, "radii.csv");
  out << "time,id,radius_dep,radius_ind\n";
  auto paths = open(common, "paths.csv");
  paths << "time,id,x_dep,y_dep,x_ind,y_ind\n";
  const auto& dep = ModelVariant::dependent;
  const auto& ind = ModelVariant::independent;
  for (std::size_t i = 0; i < p; ++i)
    for (Eigen::Index k = 0; k < m; ++k) {
      const std::string t = format_double(data.time_map.to_external(grid[static_cast<std::size_t>(k)]));
      const Eigen::Index r = static_cast<Eigen::Index>(i) * m + k;
      out << t << ',' << data.tracks[i].id << ',' << format_double(radii[dep](k, static_cast<Eigen::Index>(i))) << ','
          << format_double(radii[ind](k, static_cast<Eigen::Index>(i))) << '\n';
      paths << t << ',' << data.tracks[i].id << ',' << format_double(means[dep](r, 0)) << ','
            << format_double(means[dep](r, 1)) << ',' << format_double(means[ind](r, 0)) << ','
            << format_double(means[ind](r, 1)) << '\n';
    }
  return kExitOk;
}

inline int run_network(const Common& common, const Overrides& o, const std::string& data_path) {
  const RunConfig cfg = resolve(common, o);
  const Telemetry data = read_data(data_path, cfg);
  const PosteriorChain chain = fit(data, cfg, ModelVariant::dependent);
  auto out = open(common, "network.csv");
  write_network_csv(out, network_trajectories(chain, data.time_map), data);
  return kExitOk;
}

inline int run_study_command(const Common& common, const Overrides& o, std::optional<std::size_t> replicates,
                             std::optional<std::size_t> threads) {
  RunConfig cfg = resolve(common, o);
  if (replicates) cfg.study.replicates = *replicates;
  if (threads) cfg.study.threads = *threads;
  cfg.validate();
  const StudyConfig study = cfg.study_config();
  const std::size_t total = study.cells() * study.replicates;
  std::size_t done = 0;
  const StudyResult result = run_study(study, cfg.priors, cfg.mcmc_config(ModelVariant::dependent), cfg.seed,
                                       [&](const StudyCell& cell, std::size_t replicate) {
                                         std::cerr << "[" << ++done << "/" << total << "] w12=" << cell.w12
                                                   << " gap=" << cell.gap_fraction << " phi_inl=" << cell.phi_inl
                                                   << " replicate " << replicate << '\n';
                                       });
  {
    auto out = open(common, "study_raw.csv");
    write_study_raw(out, result);
  }
  {
    auto out = open(common, "study_failures.csv");
    write_study_failures(out, result);
  }
  {
    auto out = open(common, "study_summary.csv");
    write_study_summary(out, result);
  }
  auto out = open(common, "study_plot.csv");
  write_study_plot(out, result);
  write_study_summary(std::cout, result);
  return kExitOk;
}

}  // namespace cli_detail

/// Entry point of the command-line tool. Returns 0 on success, 1 on invalid
/// input or usage, 2 on numerical failure.
inline int cli_dispatch(int argc, const char* const* argv) {
  using namespace cli_detail;
  CLI::App app{"Socially dependent movement paths: simulation, fitting and reconstruction", "pcc"};
  app.require_subcommand(1);
  Common common;
  Overrides o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Random seed (overrides run.seed)");
    sub->add_option("--config", common.config, "INI configuration file")->check(CLI::ExistingFile);
    sub->add_option("--out-dir", common.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--iterations", o.iterations, "MCMC iterations");
    sub->add_option("--burn-in", o.burn_in, "MCMC burn-in iterations");
    sub->add_option("--grid", o.grid_points, "Grid points on the unit interval");
    sub->add_flag("--csv", common.csv, "Write arrays as CSV instead of binary");
  };

  std::optional<std::size_t> individuals, observations, draws, replicates, threads;
  std::optional<double> w12;
  std::string data_path, model = "both";

  auto* sim = app.add_subcommand("simulate", "Simulate telemetry and true paths");
  add_common(sim);
  sim->add_option("--individuals", individuals, "Number of individuals");
  sim->add_option("--observations", observations, "Observations per individual");
  sim->add_option("--w12", w12, "Constant pairwise network weight")->check(CLI::Range(0.0, 1.0));

  auto* fit_cmd = app.add_subcommand("fit", "Run MCMC and write chains and parameter summaries");
  add_common(fit_cmd);
  fit_cmd->add_option("--data", data_path, "Telemetry CSV (id,time,x,y)")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--model", model, "dep, ind or both")->check(CLI::IsMember({"dep", "ind", "both"}));

  auto* rec = app.add_subcommand("reconstruct", "Sample paths on the grid and write credible radii");
  add_common(rec);
  rec->add_option("--data", data_path, "Telemetry CSV (id,time,x,y)")->required()->check(CLI::ExistingFile);
  rec->add_option("--draws", draws, "Composition draws per model");

  auto* net = app.add_subcommand("network", "Write posterior edge-weight trajectories");
  add_common(net);
  net->add_option("--data", data_path, "Telemetry CSV (id,time,x,y)")->required()->check(CLI::ExistingFile);

  auto* study = app.add_subcommand("study", "Run the simulation study");
  add_common(study);
  study->add_option("--replicates", replicates, "Replicates per cell");
  study->add_option("--threads", threads, "Worker threads (0: all cores)");

  auto* cfg_cmd = app.add_subcommand("config", "Print the effective configuration");
  add_common(cfg_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitValidation;
  }

  try {
    if (*sim) return run_simulate(common, o, individuals, observations, w12);
    if (*fit_cmd) return run_fit(common, o, data_path, model);
    if (*rec) return run_reconstruct(common, o, data_path, draws);
    if (*net) return run_network(common, o, data_path);
    if (*study) return run_study_command(common, o, replicates, threads);
    if (*cfg_cmd) {
      write_run_config(std::cout, resolve(common, o));
      return kExitOk;
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DegenerateKernelError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  std::cerr << app.help();
  return kExitValidation;
}

}  // namespace pcc

#endif  // PCC_CLI_HPP
