#ifndef PCC_MOVEMENT_MODEL_HPP
#define PCC_MOVEMENT_MODEL_HPP

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcc/bessel.hpp"
#include "pcc/kernels.hpp"
#include "pcc/linalg.hpp"
#include "pcc/network.hpp"
#include "pcc/random.hpp"
#include "pcc/time_grid.hpp"

namespace pcc {

struct MovementParams {
  double phi_inl = 0.04;          // inertial range
  double sigma_s2 = 0.0125;       // measurement-error variance
  double ratio = 800.0;           // process-to-noise variance ratio sigma_mu^2 / sigma_s^2
  double sigma0_sq = 1.0;         // initial-noise variance multiplier
  double sigma_w2 = 10.0;         // latent dispersion
  double phi_w = 4.0 / 15.0;      // latent temporal range

  double sigma_mu2() const noexcept { return ratio * sigma_s2; }

  void validate() const {
    for (double v : {phi_inl, sigma_s2, ratio, sigma0_sq, sigma_w2, phi_w})
      if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("MovementParams: all parameters must be positive");
  }

  /// True values used by the simulation study (low or high tortuosity).
  static MovementParams simulation_truth(bool high_tortuosity) {
    MovementParams p;
    p.phi_inl = high_tortuosity ? 0.04 / 3.0 : 0.04;
    return p;
  }
};

struct GammaPrior {
  double shape;
  double rate;
  double log_density(double x) const {
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
  }
};

struct InverseGammaPrior {
  double shape;
  double scale;
  double log_density(double x) const {
    return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
  }
};

/// Defaults are the simulation-study priors; sigma_w uses the application prior.
struct PriorSpec {
  GammaPrior phi_inl{2.0, 100.0};
  InverseGammaPrior sigma0_sq{1e-3, 1e-3};
  InverseGammaPrior ratio{1e-3, 1e-3};
  InverseGammaPrior sigma_s2{1e-3, 1e-3};
  InverseGammaPrior sigma_w2{52.0, 10.0};

  void validate() const {
    for (double v : {phi_inl.shape, phi_inl.rate, sigma0_sq.shape, sigma0_sq.scale, ratio.shape, ratio.scale,
                     sigma_s2.shape, sigma_s2.scale, sigma_w2.shape, sigma_w2.scale})
      if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("PriorSpec: hyperparameters must be positive");
  }
};

/// Mapping between user time units and the internal unit interval.
struct TimeMap {
  double origin = 0.0;
  double scale = 1.0;
  double to_internal(double t) const { return (t - origin) / scale; }
  double to_external(double u) const { return origin + u * scale; }
  friend bool operator==(const TimeMap&, const TimeMap&) = default;
};

/// Observation gap detected at ingestion (internal time units).
struct ObservedGap {
  std::size_t individual;
  double from;
  double to;
  friend bool operator==(const ObservedGap&, const ObservedGap&) = default;
};

struct Track {
  std::string id;
  std::vector<double> time;       // internal units, non-decreasing
  std::vector<double> raw_time;   // user units
  std::vector<double> x;
  std::vector<double> y;
  std::size_t size() const noexcept { return time.size(); }
  friend bool operator==(const Track&, const Track&) = default;
};

struct Telemetry {
  std::vector<Track> tracks;
  TimeMap time_map;
  std::vector<ObservedGap> gaps;

  friend bool operator==(const Telemetry&, const Telemetry&) = default;

  std::size_t individuals() const noexcept { return tracks.size(); }

  std::size_t total() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tracks) n += t.size();
    return n;
  }

  /// Observation nodes, individual-major.
  std::vector<Node> nodes() const {
    std::vector<Node> out;
    out.reserve(total());
    for (std::size_t i = 0; i < tracks.size(); ++i)
      for (double t : tracks[i].time) out.push_back({i, t});
    return out;
  }

  /// n x 2 matrix of positions in node order.
  Eigen::MatrixXd positions() const {
    Eigen::MatrixXd s(static_cast<Eigen::Index>(total()), 2);
    Eigen::Index r = 0;
    for (const auto& tr : tracks)
      for (std::size_t k = 0; k < tr.size(); ++k, ++r) {
        s(r, 0) = tr.x[k];
        s(r, 1) = tr.y[k];
      }
    return s;
  }

  void validate(const TimeGrid& grid, std::size_t min_per_individual = 2) const {
    if (tracks.empty()) throw std::invalid_argument("Telemetry: no individuals");
    for (const auto& tr : tracks) {
      if (tr.size() < min_per_individual)
        throw std::invalid_argument("Telemetry: individual " + tr.id + " has fewer than " +
                                    std::to_string(min_per_individual) + " observations");
      if (tr.x.size() != tr.size() || tr.y.size() != tr.size())
        throw std::invalid_argument("Telemetry: ragged track " + tr.id);
      for (std::size_t k = 0; k < tr.size(); ++k) {
        if (!grid.contains(tr.time[k])) throw std::invalid_argument("Telemetry: time outside the grid span");
        if (!std::isfinite(tr.x[k]) || !std::isfinite(tr.y[k]))
          throw std::invalid_argument("Telemetry: non-finite coordinate for " + tr.id);
      }
    }
  }
};

enum class Stage { brownian, social, inertial };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::brownian: return "bm";
    case Stage::social: return "soc";
    case Stage::inertial: return "inl";
  }
  return "?";
}

/// Ordered kernel stages, innermost first.
struct ChainConfig {
  std::vector<Stage> stages{Stage::brownian, Stage::social, Stage::inertial};

  static ChainConfig default_order() { return {}; }
  /// Social smoothing of the noise before integration: shrinks velocities, not positions.
  static ChainConfig velocity_order() { return {{Stage::social, Stage::brownian, Stage::inertial}}; }

  void validate() const {
    if (stages.empty() || stages.back() != Stage::inertial)
      throw std::invalid_argument("ChainConfig: the outermost stage must be inertial");
    int social = 0;
    for (Stage s : stages) social += s == Stage::social;
    if (social != 1) throw std::invalid_argument("ChainConfig: exactly one social stage is required");
  }
};

enum class ModelVariant { dependent, independent };

inline const char* variant_name(ModelVariant v) { return v == ModelVariant::dependent ? "IP-DEP" : "IP-IND"; }

namespace detail {

// Row r holds the row-normalized inertial kernel of node r in its individual's block.
inline Eigen::MatrixXd inertial_rows(const std::vector<Node>& targets, const TimeGrid& grid, std::size_t p,
                                     double phi_inl) {
  const std::size_t m = grid.size();
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(targets.size()), static_cast<Eigen::Index>(p * m));
  for (std::size_t n = 0; n < targets.size(); ++n) {
    const Node& node = targets[n];
    if (node.individual >= p) throw std::invalid_argument("inertial_rows: individual index out of range");
    if (!grid.contains(node.time)) throw std::invalid_argument("inertial_rows: target outside the grid span");
    const auto row = static_cast<Eigen::Index>(n);
    const auto offset = static_cast<Eigen::Index>(node.individual * m);
    double total = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double v = matern1_correlation((node.time - grid[k]) / phi_inl);
      r(row, offset + static_cast<Eigen::Index>(k)) = v;
      total += v;
    }
    if (!(total > 0.0)) throw DegenerateKernelError("inertial_rows: zero row");
    r.block(row, offset, 1, static_cast<Eigen::Index>(m)) /= total;
  }
  return r;
}

// r <- r * H_bm, a reverse cumulative sum over knots within each individual block.
inline void right_brownian(Eigen::MatrixXd& r, std::size_t p, std::size_t m) {
  for (std::size_t j = 0; j < p; ++j) {
    const auto base = static_cast<Eigen::Index>(j * m);
    for (auto k = static_cast<Eigen::Index>(m) - 2; k >= 0; --k) r.col(base + k) += r.col(base + k + 1);
  }
}

// r <- r * H_soc, mixing individuals within each knot.
inline void right_social(Eigen::MatrixXd& r, const SocialNetwork& net, std::size_t p, std::size_t m) {
  Eigen::MatrixXd gathered(r.rows(), static_cast<Eigen::Index>(p));
  for (std::size_t k = 0; k < m; ++k) {
    const Eigen::MatrixXd s = social_matrix(net, k);
    for (std::size_t i = 0; i < p; ++i) gathered.col(static_cast<Eigen::Index>(i)) = r.col(static_cast<Eigen::Index>(i * m + k));
    const Eigen::MatrixXd mixed = gathered * s;
    for (std::size_t j = 0; j < p; ++j) r.col(static_cast<Eigen::Index>(j * m + k)) = mixed.col(static_cast<Eigen::Index>(j));
  }
}

// r <- r * blockdiag(H_inl on knots), for an inertial stage that is not outermost.
inline void right_inertial(Eigen::MatrixXd& r, const TimeGrid& grid, std::size_t p, double phi_inl) {
  const std::size_t m = grid.size();
  const Eigen::MatrixXd h = inertial_rows(stacked_nodes(grid.knots(), 1), grid, 1, phi_inl);
  for (std::size_t j = 0; j < p; ++j) {
    auto block = r.middleCols(static_cast<Eigen::Index>(j * m), static_cast<Eigen::Index>(m));
    block = (block * h).eval();
  }
}

}  // namespace detail

/// Applies the inner stages of the chain (all but the outermost inertial one)
/// from the right to precomputed outermost-stage rows.
inline void apply_inner_stages(Eigen::MatrixXd& rows, const ChainConfig& config, const SocialNetwork* net,
                               double phi_inl, const TimeGrid& grid, std::size_t p, ModelVariant variant) {
  const std::size_t m = grid.size();
  for (auto it = config.stages.rbegin() + 1; it != config.stages.rend(); ++it) {
    switch (*it) {
      case Stage::brownian: detail::right_brownian(rows, p, m); break;
      case Stage::social:
        if (variant == ModelVariant::dependent) detail::right_social(rows, *net, p, m);
        break;
      case Stage::inertial: detail::right_inertial(rows, grid, p, phi_inl); break;
    }
  }
}

/// Effective smoother H̃ from the p·m noise vector to the target nodes.
/// The independent variant skips the social stage entirely.
inline KernelMatrix build_effective_H(const ChainConfig& config, const SocialNetwork* net, double phi_inl,
                                      const TimeGrid& grid, const std::vector<Node>& targets, std::size_t p,
                                      ModelVariant variant = ModelVariant::dependent) {
  config.validate();
  if (targets.empty()) throw std::invalid_argument("build_effective_H: empty targets");
  if (!(phi_inl > 0.0)) throw std::invalid_argument("build_effective_H: phi_inl must be positive");
  if (variant == ModelVariant::dependent) {
    if (net == nullptr) throw std::invalid_argument("build_effective_H: dependent model needs a network");
    if (net->individuals() != p || net->knots() != grid.size())
      throw std::invalid_argument("build_effective_H: network does not match grid or individual count");
  }
  KernelMatrix out;
  out.individuals = p;
  out.rows = targets;
  out.cols = stacked_nodes(grid.knots(), p);
  out.values = detail::inertial_rows(targets, grid, p, phi_inl);
  apply_inner_stages(out.values, config, net, phi_inl, grid, p, variant);
  return out;
}

inline KernelMatrix build_effective_H(const ChainConfig& config, const SocialNetwork& net, const MovementParams& params,
                                      const TimeGrid& grid, const std::vector<Node>& targets, std::size_t p) {
  return build_effective_H(config, &net, params.phi_inl, grid, targets, p, ModelVariant::dependent);
}

/// Σ = σ_s² I + σ_μ² Δτ H̃ D H̃ᵀ for one spatial coordinate.
inline Eigen::MatrixXd marginal_covariance(const KernelMatrix& h, const MovementParams& params, const TimeGrid& grid) {
  Eigen::MatrixXd sigma = params.sigma_mu2() * pcc_covariance(h, NoiseSpec{grid, params.sigma0_sq});
  sigma.diagonal().array() += params.sigma_s2;
  return sigma;
}

/// Sum over the two coordinates of log N(s_c; 0, Σ), sharing one factorization.
inline double log_likelihood(const Eigen::MatrixXd& positions, const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != positions.rows()) throw std::invalid_argument("log_likelihood: Σ dimension mismatch");
  return gaussian_log_density(jittered_cholesky(sigma), positions);
}

inline double log_likelihood(const Telemetry& data, const Eigen::MatrixXd& sigma) {
  return log_likelihood(data.positions(), sigma);
}

/// Output of a forward simulation. Stage values are unscaled (before σ_μ).
struct SimulationResult {
  struct StageValues {
    Stage stage;
    std::array<Eigen::MatrixXd, 2> values;   // p x m per coordinate
  };
  std::vector<StageValues> stages;           // every stage evaluated on the grid, innermost first
  std::array<Eigen::MatrixXd, 2> truth_grid; // μ̃ on the grid, p x m
  Eigen::MatrixXd truth_obs;                 // μ̃ at observation nodes, n x 2
  double sigma_mu = 1.0;
  Telemetry data;
  TimeGrid grid;

  /// Positions of individual i on the grid, m x 2, on the observation scale.
  Eigen::MatrixXd true_positions(std::size_t i) const {
    Eigen::MatrixXd out(truth_grid[0].cols(), 2);
    out.col(0) = sigma_mu * truth_grid[0].row(static_cast<Eigen::Index>(i)).transpose();
    out.col(1) = sigma_mu * truth_grid[1].row(static_cast<Eigen::Index>(i)).transpose();
    return out;
  }
};

/// Forward simulation of true paths and noisy telemetry at the given observation times.
inline SimulationResult simulate(const MovementParams& params, const SocialNetwork& net, const TimeGrid& grid,
                                 const std::vector<std::vector<double>>& obs_times, Rng& rng,
                                 const ChainConfig& config = ChainConfig::default_order()) {
  params.validate();
  config.validate();
  const std::size_t p = obs_times.size();
  const std::size_t m = grid.size();
  if (p == 0) throw std::invalid_argument("simulate: no individuals");
  if (net.individuals() != p || net.knots() != m) throw std::invalid_argument("simulate: network mismatch");
  for (const auto& times : obs_times)
    for (double t : times)
      if (!grid.contains(t)) throw std::invalid_argument("simulate: observation time outside the grid span");

  SimulationResult out;
  out.grid = grid;
  out.sigma_mu = std::sqrt(params.sigma_mu2());
  const auto pp = static_cast<Eigen::Index>(p);
  const auto mm = static_cast<Eigen::Index>(m);
  const double root_step = std::sqrt(grid.step());

  std::array<Eigen::MatrixXd, 2> current;
  for (auto& c : current) {
    c = root_step * standard_normal(pp, mm, rng);
    c.col(0) *= std::sqrt(params.sigma0_sq);
  }

  const Eigen::MatrixXd h_knots = detail::inertial_rows(stacked_nodes(grid.knots(), 1), grid, 1, params.phi_inl);
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const Stage stage = config.stages[s];
    for (auto& c : current) {
      switch (stage) {
        case Stage::brownian:
          for (Eigen::Index k = 1; k < mm; ++k) c.col(k) += c.col(k - 1);
          break;
        case Stage::social:
          for (std::size_t k = 0; k < m; ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            c.col(kk) = (social_matrix(net, k) * c.col(kk)).eval();
          }
          break;
        case Stage::inertial: c = (c * h_knots.transpose()).eval(); break;
      }
    }
    out.stages.push_back({stage, current});
  }
  out.truth_grid = current;

  // The outermost (inertial) stage is evaluated exactly at the observation times.
  const std::array<Eigen::MatrixXd, 2>& inner = out.stages.size() >= 2 ? out.stages[out.stages.size() - 2].values
                                                                        : out.stages.back().values;
  std::vector<Node> nodes;
  for (std::size_t i = 0; i < p; ++i)
    for (double t : obs_times[i]) nodes.push_back({i, t});
  const Eigen::MatrixXd rows = detail::inertial_rows(nodes, grid, p, params.phi_inl);
  out.truth_obs.resize(static_cast<Eigen::Index>(nodes.size()), 2);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd stacked(pp * mm);
    for (Eigen::Index i = 0; i < pp; ++i) stacked.segment(i * mm, mm) = inner[c].row(i).transpose();
    out.truth_obs.col(c) = rows * stacked;
  }

  const double noise_sd = std::sqrt(params.sigma_s2);
  const Eigen::MatrixXd eps = standard_normal(static_cast<Eigen::Index>(nodes.size()), 2, rng);
  Eigen::Index r = 0;
  out.data.tracks.resize(p);
  for (std::size_t i = 0; i < p; ++i) {
    Track& tr = out.data.tracks[i];
    tr.id = std::to_string(i + 1);
    for (double t : obs_times[i]) {
      tr.time.push_back(t);
      tr.raw_time.push_back(t);
      tr.x.push_back(out.sigma_mu * out.truth_obs(r, 0) + noise_sd * eps(r, 0));
      tr.y.push_back(out.sigma_mu * out.truth_obs(r, 1) + noise_sd * eps(r, 1));
      ++r;
    }
  }
  return out;
}

}  // namespace pcc

#endif  // PCC_MOVEMENT_MODEL_HPP
