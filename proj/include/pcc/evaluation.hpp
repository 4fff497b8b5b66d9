#ifndef PCC_EVALUATION_HPP
#define PCC_EVALUATION_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pcc/errors.hpp"
#include "pcc/inference.hpp"
#include "pcc/movement_model.hpp"
#include "pcc/random.hpp"

namespace pcc {

/// Linear-interpolation sample quantile (type 7).
inline double quantile(std::vector<double> values, double level) {
  if (values.empty()) throw std::invalid_argument("quantile: empty sample");
  if (!(level >= 0.0 && level <= 1.0)) throw std::invalid_argument("quantile: level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = level * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Squared path error: mean over gap knots of the squared 2-D distance
/// between reconstruction and truth (both k x 2).
inline double spe(const Eigen::MatrixXd& reconstruction, const Eigen::MatrixXd& truth) {
  if (reconstruction.rows() == 0) throw std::invalid_argument("spe: empty gap grid");
  if (reconstruction.rows() != truth.rows() || reconstruction.cols() != truth.cols())
    throw std::invalid_argument("spe: paths must share the gap grid");
  return (reconstruction - truth).rowwise().squaredNorm().mean();
}

/// Pointwise mean of a set of k x 2 path draws.
inline Eigen::MatrixXd path_mean(const std::vector<Eigen::MatrixXd>& draws) {
  if (draws.empty()) throw std::invalid_argument("path_mean: no draws");
  // accumulate offsets from the first draw so identical draws reproduce it exactly
  const Eigen::MatrixXd& base = draws.front();
  Eigen::MatrixXd offset = Eigen::MatrixXd::Zero(base.rows(), base.cols());
  for (const auto& d : draws) offset += d - base;
  return base + offset / static_cast<double>(draws.size());
}

/// Radius of the circular credible region at each knot: the `level` quantile
/// of draw distances from the pointwise mean.
inline Eigen::VectorXd credible_radii(const std::vector<Eigen::MatrixXd>& draws, double level = 0.95) {
  if (draws.size() < 100) throw InsufficientSampleError("credible_radii: at least 100 draws required");
  const Eigen::MatrixXd mean = path_mean(draws);
  Eigen::VectorXd radii(mean.rows());
  std::vector<double> dist(draws.size());
  for (Eigen::Index k = 0; k < mean.rows(); ++k) {
    for (std::size_t d = 0; d < draws.size(); ++d) dist[d] = (draws[d].row(k) - mean.row(k)).norm();
    radii(k) = quantile(dist, level);
  }
  return radii;
}

/// Average circular credible-region radius over the gap.
inline double accrr(const std::vector<Eigen::MatrixXd>& draws, double level = 0.95) {
  const Eigen::VectorXd radii = credible_radii(draws, level);
  if (radii.size() == 0) throw std::invalid_argument("accrr: empty gap grid");
  return radii.mean();
}

/// Observation gap for one individual.
struct GapSpec {
  std::size_t individual = 1;
  double from = 0.3;
  double to = 0.7;

  double fraction(const TimeGrid& grid) const { return (to - from) / (grid.end() - grid.start()); }

  /// Gap of the given fraction centered in the grid span.
  static GapSpec centered(std::size_t individual, double fraction, const TimeGrid& grid) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("GapSpec: fraction must lie in (0, 1)");
    const double mid = 0.5 * (grid.start() + grid.end());
    const double half = 0.5 * fraction * (grid.end() - grid.start());
    return {individual, mid - half, mid + half};
  }

  /// Closed interval test with a few ulps of slack, so knots on the boundary count.
  bool covers(double t) const {
    const double slack = 1e-12 * std::max({1.0, std::abs(from), std::abs(to)});
    return t >= from - slack && t <= to + slack;
  }

  std::vector<std::size_t> knots(const TimeGrid& grid) const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < grid.size(); ++k)
      if (covers(grid[k])) out.push_back(k);
    return out;
  }
};

struct StudyConfig {
  std::vector<double> weights{0.0, 0.5, 0.9};
  std::vector<double> gap_fractions{0.4};
  std::vector<double> tortuosity{0.04 / 3.0};   // φ_inl levels
  std::size_t replicates = 10;
  std::size_t path_draws = 1000;
  std::size_t observations = 60;                // per individual, before the gap is cut
  std::size_t grid_points = 200;
  std::size_t threads = 0;                      // 0: hardware concurrency
  MovementParams truth;                         // default parameter values; φ_inl comes from `tortuosity`

  std::size_t cells() const { return weights.size() * gap_fractions.size() * tortuosity.size(); }

  void validate() const {
    if (replicates < 1) throw std::invalid_argument("StudyConfig: at least one replicate");
    if (weights.empty() || gap_fractions.empty() || tortuosity.empty())
      throw std::invalid_argument("StudyConfig: every factor needs at least one level");
    for (double w : weights)
      if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("StudyConfig: weights must lie in [0, 1]");
    for (double g : gap_fractions)
      if (!(g > 0.0 && g < 1.0)) throw std::invalid_argument("StudyConfig: gap fractions must lie in (0, 1)");
    for (double t : tortuosity)
      if (!(t > 0.0)) throw std::invalid_argument("StudyConfig: tortuosity levels must be positive");
    if (observations < 2) throw std::invalid_argument("StudyConfig: need at least two observations");
    if (path_draws < 100) throw std::invalid_argument("StudyConfig: need at least 100 path draws");
    if (grid_points < 2) throw std::invalid_argument("StudyConfig: grid needs at least two points");
    truth.validate();
  }
};

struct StudyCell {
  std::size_t index;
  double w12;
  double gap_fraction;
  double phi_inl;
};

/// One (cell, replicate, model, metric) measurement.
struct StudyRow {
  StudyCell cell;
  std::size_t replicate;
  std::string model;    // IP-DEP or IP-IND
  std::string metric;   // spe or accrr
  double value;
};

struct StudyFailure {
  StudyCell cell;
  std::size_t replicate;
  std::string message;
};

/// Per-cell ratio summary, numerator / denominator, across successful replicates.
struct CellSummary {
  StudyCell cell;
  std::string metric;   // spe_ratio or accrr_ratio
  std::string numerator = variant_name(ModelVariant::independent);
  std::string denominator = variant_name(ModelVariant::dependent);
  double q25;
  double median;
  double q75;
  std::size_t replicates;
  std::size_t failures;
};

struct StudyResult {
  std::vector<StudyRow> rows;
  std::vector<StudyFailure> failures;
  std::vector<CellSummary> summary;
};

/// Everything produced by a single replicate, kept for diagnostics.
struct ReplicateOutcome {
  double spe_dep = 0.0, spe_ind = 0.0;
  double accrr_dep = 0.0, accrr_ind = 0.0;
};

/// Steps 1-5 for one replicate: simulate, fit both models, compose paths over the gap, score.
inline ReplicateOutcome run_replicate(const StudyConfig& config, const StudyCell& cell, const PriorSpec& priors,
                                      const MCMCConfig& mcmc, std::uint64_t seed) {
  const TimeGrid grid = make_grid(0.0, 1.0, config.grid_points);
  Rng rng(derive_seed(seed, {0}));

  MovementParams truth = config.truth;
  truth.phi_inl = cell.phi_inl;
  const GapSpec gap = GapSpec::centered(1, cell.gap_fraction, grid);

  std::vector<std::vector<double>> times(2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < config.observations; ++k) {
      const double t = unit(rng);
      if (i == gap.individual && gap.covers(t)) continue;
      times[i].push_back(t);
    }
    std::sort(times[i].begin(), times[i].end());
  }

  const SocialNetwork net = SocialNetwork::constant_pair(grid, cell.w12);
  const SimulationResult sim = simulate(truth, net, grid, times, rng);

  const std::vector<std::size_t> gap_knots = gap.knots(grid);
  if (gap_knots.empty()) throw std::invalid_argument("run_replicate: gap contains no grid knots");
  std::vector<Node> pred;
  Eigen::MatrixXd truth_gap(static_cast<Eigen::Index>(gap_knots.size()), 2);
  const Eigen::MatrixXd truth_path = sim.true_positions(gap.individual);
  for (std::size_t k = 0; k < gap_knots.size(); ++k) {
    pred.push_back({gap.individual, grid[gap_knots[k]]});
    truth_gap.row(static_cast<Eigen::Index>(k)) = truth_path.row(static_cast<Eigen::Index>(gap_knots[k]));
  }

  ReplicateOutcome out;
  for (ModelVariant variant : {ModelVariant::dependent, ModelVariant::independent}) {
    MCMCConfig cfg = mcmc;
    cfg.variant = variant;
    cfg.grid_points = config.grid_points;
    cfg.seed = derive_seed(seed, {1, static_cast<std::uint64_t>(variant)});
    if (!cfg.initial) cfg.initial = truth;
    const PosteriorChain chain = run_mcmc(sim.data, priors, cfg);
    Rng draw_rng(derive_seed(seed, {2, static_cast<std::uint64_t>(variant)}));
    const std::vector<Eigen::MatrixXd> draws = composition_samples(chain, sim.data, pred, draw_rng, config.path_draws);
    const double s = spe(path_mean(draws), truth_gap);
    const double a = accrr(draws, 0.95);
    if (variant == ModelVariant::dependent) {
      out.spe_dep = s;
      out.accrr_dep = a;
    } else {
      out.spe_ind = s;
      out.accrr_ind = a;
    }
  }
  return out;
}

/// Full factorial simulation study. Replicates run concurrently with seeds
/// derived from (seed, cell, replicate); aggregation is sequential.
inline StudyResult run_study(const StudyConfig& config, const PriorSpec& priors, const MCMCConfig& mcmc,
                             std::uint64_t seed,
                             const std::function<void(const StudyCell&, std::size_t)>& progress = {}) {
  config.validate();
  std::vector<StudyCell> cells;
  for (double g : config.gap_fractions)
    for (double phi : config.tortuosity)
      for (double w : config.weights) cells.push_back({cells.size(), w, g, phi});

  struct Task {
    std::size_t cell;
    std::size_t replicate;
    std::optional<ReplicateOutcome> outcome;
    std::string error;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (std::size_t r = 0; r < config.replicates; ++r) tasks.push_back({c, r, std::nullopt, {}});

  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      Task& task = tasks[t];
      try {
        task.outcome = run_replicate(config, cells[task.cell], priors, mcmc,
                                     derive_seed(seed, {task.cell, task.replicate}));
      } catch (const std::exception& e) {
        task.error = e.what();
      }
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(cells[task.cell], task.replicate);
      }
    }
  };
  std::size_t threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, tasks.size());
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  StudyResult result;
  for (const Task& task : tasks) {
    const StudyCell& cell = cells[task.cell];
    if (!task.outcome) {
      result.failures.push_back({cell, task.replicate, task.error});
      continue;
    }
    const ReplicateOutcome& o = *task.outcome;
    result.rows.push_back({cell, task.replicate, "IP-DEP", "spe", o.spe_dep});
    result.rows.push_back({cell, task.replicate, "IP-IND", "spe", o.spe_ind});
    result.rows.push_back({cell, task.replicate, "IP-DEP", "accrr", o.accrr_dep});
    result.rows.push_back({cell, task.replicate, "IP-IND", "accrr", o.accrr_ind});
  }

  for (const StudyCell& cell : cells) {
    std::vector<double> spe_ratio, accrr_ratio;
    std::size_t failures = 0;
    for (const Task& task : tasks) {
      if (task.cell != cell.index) continue;
      if (!task.outcome) {
        ++failures;
        continue;
      }
      spe_ratio.push_back(task.outcome->spe_ind / task.outcome->spe_dep);
      accrr_ratio.push_back(task.outcome->accrr_ind / task.outcome->accrr_dep);
    }
    for (auto [name, values] : {std::pair{"spe_ratio", &spe_ratio}, std::pair{"accrr_ratio", &accrr_ratio}}) {
      CellSummary s{cell, name};
      s.replicates = values->size();
      s.failures = failures;
      if (values->empty()) {
        s.q25 = s.median = s.q75 = std::nan("");
      } else {
        s.q25 = quantile(*values, 0.25);
        s.median = quantile(*values, 0.5);
        s.q75 = quantile(*values, 0.75);
      }
      result.summary.push_back(s);
    }
  }
  return result;
}

}  // namespace pcc

#endif  // PCC_EVALUATION_HPP
