#ifndef PCC_INFERENCE_HPP
#define PCC_INFERENCE_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcc/kernels.hpp"
#include "pcc/linalg.hpp"
#include "pcc/movement_model.hpp"
#include "pcc/random.hpp"
#include "pcc/social_network.hpp"

namespace pcc {

/// Log-scale random-walk proposal sd per scalar parameter.
struct ParamScales {
  double phi_inl = 0.1;
  double sigma_s2 = 0.1;
  double ratio = 0.1;
  double sigma0_sq = 0.1;
};

/// Parameters held at their initial values.
struct FixedParams {
  bool phi_inl = false;
  bool sigma_s2 = false;
  bool ratio = false;
  bool sigma0_sq = false;
  bool latent = false;
  bool sigma_w2 = false;
};

struct MCMCConfig {
  std::size_t iterations = 4000;
  std::size_t burn_in = 3000;
  std::size_t thin = 1;
  std::size_t grid_points = 200;
  ParamScales scales;
  double beta = 0.1;                  // pCN step
  std::uint64_t seed = 1;
  ModelVariant variant = ModelVariant::dependent;
  ChainConfig chain;
  bool adapt = true;                  // tune scales during burn-in only
  double phi_w = 4.0 / 15.0;
  double sigma_w2 = 10.0;             // initial (or fixed) latent dispersion
  FixedParams fixed;
  std::optional<MovementParams> initial;
  std::optional<std::vector<Eigen::MatrixXd>> initial_latent;

  std::size_t retained() const { return (iterations - burn_in) / thin; }

  void validate() const {
    if (iterations == 0) throw std::invalid_argument("MCMCConfig: iterations must be positive");
    if (burn_in >= iterations) throw std::invalid_argument("MCMCConfig: burn-in must be below the iteration count");
    if (thin == 0) throw std::invalid_argument("MCMCConfig: thin must be positive");
    if (grid_points < 2) throw std::invalid_argument("MCMCConfig: grid needs at least two points");
    if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("MCMCConfig: beta must lie in (0, 1]");
    for (double s : {scales.phi_inl, scales.sigma_s2, scales.ratio, scales.sigma0_sq})
      if (!(s > 0.0)) throw std::invalid_argument("MCMCConfig: proposal scales must be positive");
    if (!(phi_w > 0.0) || !(sigma_w2 > 0.0)) throw std::invalid_argument("MCMCConfig: latent hyperparameters must be positive");
    chain.validate();
  }

  TimeGrid grid() const { return make_grid(0.0, 1.0, grid_points); }
};

struct ChainRecord {
  MovementParams params;
  std::vector<Eigen::MatrixXd> latent;   // per individual m x 2; empty for IP-IND
  double log_likelihood = 0.0;
};

struct AcceptanceCounter {
  std::size_t proposed = 0;
  std::size_t accepted = 0;
  double rate() const { return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0; }
};

struct PosteriorChain {
  MCMCConfig config;
  TimeGrid grid;
  std::size_t individuals = 0;
  std::vector<ChainRecord> records;
  std::map<std::string, AcceptanceCounter> acceptance;
  ParamScales final_scales;
  double final_beta = 0.1;
  std::vector<std::string> warnings;
  bool touched_latent = false;
};

/// Inverse-gamma parameters of the σ_w² full conditional.
struct InverseGammaParams {
  double shape;
  double scale;
  friend bool operator==(const InverseGammaParams&, const InverseGammaParams&) = default;
};

/// IG(a + count/2, b + q/2) for `count` Gaussian coordinates with unit-variance quadratic form q.
inline InverseGammaParams sigma_w2_posterior(const InverseGammaPrior& prior, std::size_t count, double q) {
  return {prior.shape + static_cast<double>(count) / 2.0, prior.scale + q / 2.0};
}

inline InverseGammaParams sigma_w2_posterior(const LatentSocialPaths& paths, const LatentPrior& prior,
                                             const InverseGammaPrior& hyper) {
  double q = 0.0;
  std::size_t count = 0;
  for (const auto& pos : paths.positions) {
    q += prior.quadratic_form(pos);
    count += static_cast<std::size_t>(pos.size());
  }
  return sigma_w2_posterior(hyper, count, q);
}

inline double gibbs_sigma_w2(const LatentSocialPaths& paths, const LatentPrior& prior, const InverseGammaPrior& hyper,
                             Rng& rng) {
  const InverseGammaParams post = sigma_w2_posterior(paths, prior, hyper);
  return inverse_gamma_draw(post.shape, post.scale, rng);
}

/// pCN proposal √(1-β²) x + β ξ with ξ a fresh prior draw.
inline Eigen::MatrixXd pcn_proposal(const Eigen::MatrixXd& current, const Eigen::MatrixXd& prior_draw, double beta) {
  return std::sqrt(1.0 - beta * beta) * current + beta * prior_draw;
}

struct PcnOutcome {
  bool accepted;
  Eigen::MatrixXd state;
  double log_likelihood;
};

/// One pCN Metropolis step for a Gaussian-prior state. The prior cancels, so
/// acceptance depends on the likelihood ratio only.
template <class LogLikelihood, class PriorDraw>
PcnOutcome pcn_step(const Eigen::MatrixXd& current, double current_ll, double beta, LogLikelihood&& log_likelihood,
                    PriorDraw&& prior_draw, Rng& rng) {
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("pcn_step: beta must lie in (0, 1]");
  Eigen::MatrixXd proposal = pcn_proposal(current, prior_draw(rng), beta);
  const double ll = log_likelihood(proposal);
  const double log_u = std::log(uniform01(rng));
  if (log_u < ll - current_ll) return {true, std::move(proposal), ll};
  return {false, current, current_ll};
}

/// Integrated likelihood of the telemetry, Σ = σ_s² M with
/// M = I + ratio · Δτ H̃ D H̃ᵀ. The Gram matrix of H̃ is kept split into the
/// initial-knot part and the rest so that σ_s², ratio and σ0² updates need
/// no rebuild of H̃.
class IntegratedLikelihood {
 public:
  struct Gram {
    Eigen::MatrixXd rest;      // Δτ H̃_rest H̃_restᵀ
    Eigen::MatrixXd initial;   // Δτ H̃_0 H̃_0ᵀ
  };

  struct Factor {
    JitteredCholesky chol;
    double log_det = 0.0;
    double quad = 0.0;   // summed over coordinates
  };

  IntegratedLikelihood(const Telemetry& data, TimeGrid grid, ChainConfig chain, ModelVariant variant)
      : grid_(std::move(grid)), chain_(std::move(chain)), variant_(variant), nodes_(data.nodes()),
        positions_(data.positions()), p_(data.individuals()) {}

  std::size_t individuals() const noexcept { return p_; }
  Eigen::Index observations() const noexcept { return positions_.rows(); }
  const TimeGrid& grid() const noexcept { return grid_; }

  Eigen::MatrixXd effective(double phi_inl, const SocialNetwork* net) const {
    return build_effective_H(chain_, net, phi_inl, grid_, nodes_, p_, variant_).values;
  }

  /// Outermost-stage rows for φ_inl; these do not depend on the network.
  Eigen::MatrixXd inertial(double phi_inl) const { return detail::inertial_rows(nodes_, grid_, p_, phi_inl); }

  /// H̃ from cached outermost-stage rows.
  Eigen::MatrixXd effective(const Eigen::MatrixXd& inertial_rows, double phi_inl, const SocialNetwork* net) const {
    Eigen::MatrixXd h = inertial_rows;
    apply_inner_stages(h, chain_, net, phi_inl, grid_, p_, variant_);
    return h;
  }

  Gram gram(const Eigen::MatrixXd& h) const {
    const auto m = static_cast<Eigen::Index>(grid_.size());
    Eigen::MatrixXd rest = h;
    Eigen::MatrixXd init(h.rows(), static_cast<Eigen::Index>(p_));
    for (std::size_t j = 0; j < p_; ++j) {
      const auto c = static_cast<Eigen::Index>(j) * m;
      init.col(static_cast<Eigen::Index>(j)) = h.col(c);
      rest.col(c).setZero();
    }
    const double step = grid_.step();
    Gram g;
    g.rest = Eigen::MatrixXd::Zero(h.rows(), h.rows());
    g.rest.selfadjointView<Eigen::Lower>().rankUpdate(rest, step);
    g.rest = g.rest.selfadjointView<Eigen::Lower>();
    g.initial = step * (init * init.transpose());
    return g;
  }

  Factor factor(const Gram& g, double ratio, double sigma0_sq) const {
    Eigen::MatrixXd m = ratio * (g.rest + sigma0_sq * g.initial);
    m.diagonal().array() += 1.0;
    Factor f;
    f.chol = jittered_cholesky(m);
    f.log_det = f.chol.log_determinant();
    f.quad = f.chol.quadratic_form(positions_);
    return f;
  }

  double log_likelihood(const Factor& f, double sigma_s2) const {
    const double n = static_cast<double>(positions_.rows());
    const double d = static_cast<double>(positions_.cols());
    return -0.5 * (d * (n * std::log(2.0 * std::numbers::pi * sigma_s2) + f.log_det) + f.quad / sigma_s2);
  }

  /// Direct evaluation from parameters and network.
  double evaluate(const MovementParams& params, const SocialNetwork* net) const {
    return log_likelihood(factor(gram(effective(params.phi_inl, net)), params.ratio, params.sigma0_sq),
                          params.sigma_s2);
  }

 private:
  TimeGrid grid_;
  ChainConfig chain_;
  ModelVariant variant_;
  std::vector<Node> nodes_;
  Eigen::MatrixXd positions_;
  std::size_t p_;
};

/// Starting values when none are configured: prior mean for φ_inl, a
/// successive-difference estimate for σ_s² and the overall spread for the ratio.
inline MovementParams default_initial_params(const Telemetry& data, const PriorSpec& priors, const MCMCConfig& config) {
  MovementParams init;
  init.phi_inl = priors.phi_inl.shape / priors.phi_inl.rate;
  std::vector<double> sq;
  double total = 0.0;
  double total_sq = 0.0;
  std::size_t count = 0;
  for (const auto& tr : data.tracks) {
    for (std::size_t k = 0; k < tr.size(); ++k) {
      total += tr.x[k] + tr.y[k];
      total_sq += tr.x[k] * tr.x[k] + tr.y[k] * tr.y[k];
      count += 2;
      if (k > 0) {
        sq.push_back(0.5 * (std::pow(tr.x[k] - tr.x[k - 1], 2) + std::pow(tr.y[k] - tr.y[k - 1], 2)));
      }
    }
  }
  double half_msd = 0.0;
  if (!sq.empty()) {
    std::nth_element(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(sq.size() / 2), sq.end());
    half_msd = 0.5 * sq[sq.size() / 2];
  }
  const double mean = count ? total / static_cast<double>(count) : 0.0;
  const double var = count ? total_sq / static_cast<double>(count) - mean * mean : 1.0;
  init.sigma_s2 = half_msd > 0.0 ? half_msd : std::max(var * 1e-3, 1e-8);
  init.ratio = std::max(1.0, var / init.sigma_s2);
  init.sigma0_sq = 1.0;
  init.sigma_w2 = config.sigma_w2;
  init.phi_w = config.phi_w;
  return init;
}

namespace detail {

struct ScalarUpdate {
  const char* name;
  double MovementParams::*field;
  double ParamScales::*scale;
  bool FixedParams::*fixed;
};

inline constexpr ScalarUpdate kScalarUpdates[] = {
    {"phi_inl", &MovementParams::phi_inl, &ParamScales::phi_inl, &FixedParams::phi_inl},
    {"sigma_s2", &MovementParams::sigma_s2, &ParamScales::sigma_s2, &FixedParams::sigma_s2},
    {"ratio", &MovementParams::ratio, &ParamScales::ratio, &FixedParams::ratio},
    {"sigma0_sq", &MovementParams::sigma0_sq, &ParamScales::sigma0_sq, &FixedParams::sigma0_sq},
};

inline double log_prior(const PriorSpec& priors, const char* name, double v) {
  const std::string n = name;
  if (n == "phi_inl") return priors.phi_inl.log_density(v);
  if (n == "sigma_s2") return priors.sigma_s2.log_density(v);
  if (n == "ratio") return priors.ratio.log_density(v);
  return priors.sigma0_sq.log_density(v);
}

}  // namespace detail

/// Complete sampler state for one chain.
struct ChainState {
  MovementParams params;
  std::optional<LatentSocialPaths> latent;
  std::optional<SocialNetwork> network;
  Eigen::MatrixXd inertial;   // outermost-stage rows at params.phi_inl
  Eigen::MatrixXd h;
  IntegratedLikelihood::Gram gram;
  IntegratedLikelihood::Factor factor;
  double log_likelihood = 0.0;
};

/// pCN update of individual i's latent path against the integrated likelihood.
inline bool pcn_update_latent_path(std::size_t i, ChainState& state, double beta, const IntegratedLikelihood& model,
                                   const LatentPrior& prior, Rng& rng) {
  if (!state.latent || !state.network) throw std::invalid_argument("pcn_update_latent_path: dependent model only");
  const double scale = std::sqrt(state.params.sigma_w2);
  Eigen::MatrixXd h_new;
  IntegratedLikelihood::Gram gram_new;
  IntegratedLikelihood::Factor factor_new;
  SocialNetwork net_new;
  auto ll = [&](const Eigen::MatrixXd& proposal) {
    LatentSocialPaths trial = *state.latent;
    trial.positions[i] = proposal;
    net_new = *state.network;
    refresh_edges(net_new, trial, i);
    h_new = model.effective(state.inertial, state.params.phi_inl, &net_new);
    gram_new = model.gram(h_new);
    factor_new = model.factor(gram_new, state.params.ratio, state.params.sigma0_sq);
    return model.log_likelihood(factor_new, state.params.sigma_s2);
  };
  auto draw = [&](Rng& r) { return Eigen::MatrixXd(scale * prior.draw(r)); };
  PcnOutcome out = pcn_step(state.latent->positions[i], state.log_likelihood, beta, ll, draw, rng);
  if (out.accepted) {
    state.latent->positions[i] = std::move(out.state);
    state.network = std::move(net_new);
    state.h = std::move(h_new);
    state.gram = std::move(gram_new);
    state.factor = std::move(factor_new);
    state.log_likelihood = out.log_likelihood;
  }
  return out.accepted;
}

/// Metropolis-within-Gibbs over (φ_inl, σ_s², ratio, σ0²) on the log scale,
/// pCN over each latent path and a conjugate draw of σ_w².
inline PosteriorChain run_mcmc(const Telemetry& data, const PriorSpec& priors, const MCMCConfig& config) {
  config.validate();
  priors.validate();
  const TimeGrid grid = config.grid();
  data.validate(grid, 1);
  const bool dependent = config.variant == ModelVariant::dependent;
  const std::size_t p = data.individuals();

  PosteriorChain chain;
  chain.config = config;
  chain.grid = grid;
  chain.individuals = p;
  chain.records.reserve(config.retained());

  Rng rng(config.seed);
  IntegratedLikelihood model(data, grid, config.chain, config.variant);

  ChainState state;
  state.params = config.initial ? *config.initial : default_initial_params(data, priors, config);
  state.params.phi_w = config.phi_w;
  if (!config.initial) state.params.sigma_w2 = config.sigma_w2;
  state.params.validate();

  std::shared_ptr<const LatentPrior> latent_prior;
  if (dependent) {
    latent_prior = LatentPrior::shared(grid, config.phi_w);
    if (config.initial_latent) {
      state.latent = LatentSocialPaths{grid, state.params.sigma_w2, config.phi_w, *config.initial_latent};
      if (state.latent->individuals() != p) throw std::invalid_argument("run_mcmc: initial latent paths mismatch");
      state.latent->validate();
    } else {
      state.latent = sample_latent_paths(p, *latent_prior, state.params.sigma_w2, rng);
    }
    state.network = weights_from_paths(*state.latent);
    chain.touched_latent = true;
  }

  const SocialNetwork* net_ptr = state.network ? &*state.network : nullptr;
  state.inertial = model.inertial(state.params.phi_inl);
  state.h = model.effective(state.inertial, state.params.phi_inl, net_ptr);
  state.gram = model.gram(state.h);
  state.factor = model.factor(state.gram, state.params.ratio, state.params.sigma0_sq);
  state.log_likelihood = model.log_likelihood(state.factor, state.params.sigma_s2);

  ParamScales scales = config.scales;
  std::map<std::string, AcceptanceCounter> window;       // adaptation window
  std::map<std::string, AcceptanceCounter> long_window;  // pathology window
  constexpr std::size_t adapt_every = 50;
  constexpr std::size_t pathology_every = 500;

  for (std::size_t iter = 0; iter < config.iterations; ++iter) {
    try {
      for (const auto& u : detail::kScalarUpdates) {
        if (config.fixed.*(u.fixed)) continue;
        const double current = state.params.*(u.field);
        const double proposed = current * std::exp(scales.*(u.scale) * std::normal_distribution<double>(0.0, 1.0)(rng));
        MovementParams trial = state.params;
        trial.*(u.field) = proposed;
        const std::string name = u.name;

        Eigen::MatrixXd inertial_new, h_new;
        IntegratedLikelihood::Gram gram_new;
        IntegratedLikelihood::Factor factor_new;
        double ll_new;
        if (name == "phi_inl") {
          try {
            inertial_new = model.inertial(proposed);
          } catch (const DegenerateKernelError&) {
            // every knot weight underflowed; the proposal has no representable likelihood
            for (auto* counter : {&chain.acceptance[name], &window[name], &long_window[name]}) ++counter->proposed;
            continue;
          }
          h_new = model.effective(inertial_new, proposed, net_ptr);
          gram_new = model.gram(h_new);
          factor_new = model.factor(gram_new, trial.ratio, trial.sigma0_sq);
          ll_new = model.log_likelihood(factor_new, trial.sigma_s2);
        } else if (name == "sigma_s2") {
          ll_new = model.log_likelihood(state.factor, proposed);
        } else {
          factor_new = model.factor(state.gram, trial.ratio, trial.sigma0_sq);
          ll_new = model.log_likelihood(factor_new, trial.sigma_s2);
        }
        const double log_ratio = ll_new - state.log_likelihood + detail::log_prior(priors, u.name, proposed) -
                                 detail::log_prior(priors, u.name, current) + std::log(proposed) - std::log(current);
        const bool accept = std::log(uniform01(rng)) < log_ratio;
        for (auto* counter : {&chain.acceptance[name], &window[name], &long_window[name]}) {
          ++counter->proposed;
          counter->accepted += accept;
        }
        if (!accept) continue;
        state.params = trial;
        state.log_likelihood = ll_new;
        if (name == "phi_inl") {
          state.inertial = std::move(inertial_new);
          state.h = std::move(h_new);
          state.gram = std::move(gram_new);
          state.factor = std::move(factor_new);
        } else if (name != "sigma_s2") {
          state.factor = std::move(factor_new);
        }
      }

      if (dependent && !config.fixed.latent) {
        for (std::size_t i = 0; i < p; ++i) {
          const bool accept = pcn_update_latent_path(i, state, config.beta, model, *latent_prior, rng);
          ++chain.acceptance["latent"].proposed;
          chain.acceptance["latent"].accepted += accept;
        }
        net_ptr = &*state.network;
      }

      if (dependent && !config.fixed.sigma_w2) {
        state.params.sigma_w2 = gibbs_sigma_w2(*state.latent, *latent_prior, priors.sigma_w2, rng);
        state.latent->sigma_w2 = state.params.sigma_w2;
      }
    } catch (const NumericalError& e) {
      throw NumericalError("run_mcmc: likelihood failure at iteration " + std::to_string(iter) + ": " + e.what(),
                           e.jitter());
    }

    if (config.adapt && iter < config.burn_in && (iter + 1) % adapt_every == 0) {
      for (const auto& u : detail::kScalarUpdates) {
        auto it = window.find(u.name);
        if (it == window.end() || it->second.proposed == 0) continue;
        const double rate = it->second.rate();
        double& s = scales.*(u.scale);
        if (rate < 0.20) s *= rate < 0.05 ? 0.5 : 0.8;
        else if (rate > 0.45) s *= rate > 0.8 ? 2.0 : 1.25;
        s = std::clamp(s, 1e-4, 5.0);
      }
      window.clear();
    }
    if ((iter + 1) % pathology_every == 0) {
      for (const auto& [name, counter] : long_window) {
        if (counter.proposed == 0) continue;
        if (counter.accepted == 0 || counter.accepted == counter.proposed)
          chain.warnings.push_back("iterations " + std::to_string(iter + 1 - pathology_every) + "-" +
                                   std::to_string(iter) + ": " + name + " acceptance " +
                                   (counter.accepted == 0 ? "0%" : "100%"));
      }
      long_window.clear();
    }

    if (iter >= config.burn_in && (iter - config.burn_in + 1) % config.thin == 0) {
      ChainRecord rec;
      rec.params = state.params;
      rec.log_likelihood = state.log_likelihood;
      if (state.latent) rec.latent = state.latent->positions;
      chain.records.push_back(std::move(rec));
    }
  }
  chain.final_scales = scales;
  chain.final_beta = config.beta;
  return chain;
}

/// Conditional mean (n_pred x 2) and covariance of σ_μ μ̃ at the prediction nodes given the telemetry.
struct ConditionalMoments {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd covariance;
};

inline SocialNetwork record_network(const ChainRecord& rec, const TimeGrid& grid, std::size_t p) {
  if (rec.latent.empty()) return SocialNetwork::empty(grid, p);
  return weights_from_paths(LatentSocialPaths{grid, rec.params.sigma_w2, rec.params.phi_w, rec.latent});
}

/// Outermost-stage rows of the last φ_inl seen, reused across records.
struct InertialCache {
  double phi_inl = 0.0;
  Eigen::MatrixXd rows;
};

inline ConditionalMoments conditional_moments(const ChainRecord& rec, const Telemetry& data,
                                              const std::vector<Node>& pred, const TimeGrid& grid,
                                              const ChainConfig& chain, ModelVariant variant,
                                              InertialCache* cache = nullptr) {
  if (pred.empty()) throw std::invalid_argument("composition_sample: no prediction nodes");
  for (const Node& nd : pred)
    if (!grid.contains(nd.time)) throw std::invalid_argument("composition_sample: prediction time outside the grid span");
  const std::size_t p = data.individuals();
  std::vector<Node> nodes = data.nodes();
  const auto n_obs = static_cast<Eigen::Index>(nodes.size());
  const auto n_pred = static_cast<Eigen::Index>(pred.size());
  nodes.insert(nodes.end(), pred.begin(), pred.end());

  const SocialNetwork net = record_network(rec, grid, p);
  const SocialNetwork* net_ptr = variant == ModelVariant::dependent ? &net : nullptr;
  KernelMatrix h;
  if (cache == nullptr) {
    h = build_effective_H(chain, net_ptr, rec.params.phi_inl, grid, nodes, p, variant);
  } else {
    chain.validate();
    if (cache->rows.size() == 0 || cache->phi_inl != rec.params.phi_inl) {
      cache->rows = detail::inertial_rows(nodes, grid, p, rec.params.phi_inl);
      cache->phi_inl = rec.params.phi_inl;
    }
    h.individuals = p;
    h.rows = nodes;
    h.cols = stacked_nodes(grid.knots(), p);
    h.values = cache->rows;
    apply_inner_stages(h.values, chain, net_ptr, rec.params.phi_inl, grid, p, variant);
  }
  const Eigen::MatrixXd joint = rec.params.sigma_mu2() * pcc_covariance(h, NoiseSpec{grid, rec.params.sigma0_sq});
  Eigen::MatrixXd sigma = joint.topLeftCorner(n_obs, n_obs);
  sigma.diagonal().array() += rec.params.sigma_s2;
  const Eigen::MatrixXd cross = joint.bottomLeftCorner(n_pred, n_obs);
  const Eigen::MatrixXd pp = joint.bottomRightCorner(n_pred, n_pred);

  const JitteredCholesky chol = jittered_cholesky(sigma);
  const Eigen::MatrixXd gain = chol.llt.solve(cross.transpose());   // Σ⁻¹ C_psᵀ
  ConditionalMoments out;
  out.mean = gain.transpose() * data.positions();
  out.covariance = pp - cross * gain;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

/// One draw of σ_μ μ̃ (n_pred x 2) from its conditional Gaussian given the data.
inline Eigen::MatrixXd draw_conditional(const ConditionalMoments& moments, Rng& rng, double reference_scale) {
  const JitteredCholesky chol = jittered_cholesky(moments.covariance, 1e-8, reference_scale);
  const Eigen::MatrixXd z = standard_normal(moments.mean.rows(), 2, rng);
  return moments.mean + chol.lower() * z;
}

inline Eigen::MatrixXd composition_sample(const ChainRecord& rec, const Telemetry& data, const std::vector<Node>& pred,
                                          const TimeGrid& grid, const ChainConfig& chain, ModelVariant variant,
                                          Rng& rng, InertialCache* cache = nullptr) {
  const ConditionalMoments moments = conditional_moments(rec, data, pred, grid, chain, variant, cache);
  // jitter is measured against the unconditional scale, since the conditional variance can vanish
  const double reference = std::max(moments.covariance.diagonal().mean(), 1e-12 * rec.params.sigma_mu2());
  return draw_conditional(moments, rng, reference);
}

/// Composition draws for every retained record of a chain.
inline std::vector<Eigen::MatrixXd> composition_samples(const PosteriorChain& chain, const Telemetry& data,
                                                        const std::vector<Node>& pred, Rng& rng,
                                                        std::size_t max_draws = 0) {
  std::vector<Eigen::MatrixXd> out;
  const std::size_t total = chain.records.size();
  const std::size_t draws = max_draws == 0 ? total : std::min(max_draws, total);
  out.reserve(draws);
  InertialCache cache;
  for (std::size_t k = 0; k < draws; ++k) {
    const std::size_t idx = draws == total ? k : (k * total) / draws;
    out.push_back(composition_sample(chain.records[idx], data, pred, chain.grid, chain.config.chain,
                                     chain.config.variant, rng, &cache));
  }
  return out;
}

}  // namespace pcc

#endif  // PCC_INFERENCE_HPP
