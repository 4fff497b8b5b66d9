#include <gtest/gtest.h>

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "pcc/inference.hpp"
#include "pcc/kernels.hpp"

using namespace pcc;

namespace {

Telemetry simulated(const TimeGrid& g, const SocialNetwork& net, const std::vector<std::vector<double>>& times,
                    std::uint64_t seed, MovementParams p = {}) {
  Rng rng(seed);
  return simulate(p, net, g, times, rng).data;
}

std::vector<double> knot_times(const TimeGrid& g, std::initializer_list<std::size_t> idx) {
  std::vector<double> out;
  for (std::size_t k : idx) out.push_back(g[k]);
  return out;
}

MCMCConfig small_config(std::size_t m, ModelVariant v) {
  MCMCConfig c;
  c.grid_points = m;
  c.iterations = 60;
  c.burn_in = 20;
  c.variant = v;
  c.seed = 99;
  return c;
}

double gamma_cdf(const GammaPrior& g, double x) { return boost::math::gamma_p(g.shape, g.rate * x); }
double gamma_quantile(const GammaPrior& g, double q) { return boost::math::gamma_p_inv(g.shape, q) / g.rate; }
double ig_quantile(const InverseGammaPrior& g, double q) { return g.scale / boost::math::gamma_q_inv(g.shape, q); }

// Standard error of a mean over a correlated sequence, by batch means.
double batch_se(const std::vector<double>& x, std::size_t batches = 50) {
  const std::size_t len = x.size() / batches;
  std::vector<double> means;
  for (std::size_t b = 0; b < batches; ++b)
    means.push_back(std::accumulate(x.begin() + b * len, x.begin() + (b + 1) * len, 0.0) / len);
  const double mu = std::accumulate(means.begin(), means.end(), 0.0) / batches;
  double v = 0.0;
  for (double m : means) v += (m - mu) * (m - mu);
  return std::sqrt(v / (batches - 1) / batches);
}

}  // namespace

TEST(MCMCConfig, Validation) {
  MCMCConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.iterations, 4000u);
  EXPECT_EQ(c.burn_in, 3000u);
  EXPECT_EQ(c.beta, 0.1);
  EXPECT_EQ(c.retained(), 1000u);
  for (auto mutate : std::vector<void (*)(MCMCConfig&)>{
           [](MCMCConfig& x) { x.burn_in = x.iterations; }, [](MCMCConfig& x) { x.beta = 0.0; },
           [](MCMCConfig& x) { x.beta = 1.5; }, [](MCMCConfig& x) { x.scales.ratio = 0.0; },
           [](MCMCConfig& x) { x.thin = 0; }}) {
    MCMCConfig bad;
    mutate(bad);
    EXPECT_THROW(bad.validate(), std::invalid_argument);
  }
}

TEST(GibbsSigmaW2, ConjugateArithmetic) {
  EXPECT_EQ(sigma_w2_posterior(InverseGammaPrior{1.0, 10.0}, 2, 4.0), (InverseGammaParams{2.0, 12.0}));
  const TimeGrid g = make_grid(0.0, 1.0, 7);
  const LatentPrior prior(g, 0.3);
  const LatentSocialPaths zeros{g, 1.0, 0.3, {Eigen::MatrixXd::Zero(7, 2), Eigen::MatrixXd::Zero(7, 2)}};
  EXPECT_EQ(sigma_w2_posterior(zeros, prior, InverseGammaPrior{52.0, 10.0}), (InverseGammaParams{52.0 + 14.0, 10.0}));
}

TEST(GibbsSigmaW2, MatchesQuadraticFormOfPaths) {
  const TimeGrid g = make_grid(0.0, 1.0, 9);
  const LatentPrior prior(g, 0.3);
  Rng rng(2);
  const LatentSocialPaths paths = sample_latent_paths(3, prior, 2.0, rng);
  const Eigen::MatrixXd inv = prior.covariance().inverse();
  double q = 0.0;
  for (const auto& pos : paths.positions)
    for (int c = 0; c < 2; ++c) q += pos.col(c).dot(inv * pos.col(c));
  const InverseGammaParams post = sigma_w2_posterior(paths, prior, InverseGammaPrior{1.0, 10.0});
  EXPECT_EQ(post.shape, 1.0 + 3.0 * 2.0 * 9.0 / 2.0);
  EXPECT_NEAR(post.scale, 10.0 + q / 2.0, 1e-8 * post.scale);
}

TEST(GibbsSigmaW2, MonteCarloMeanMatchesPosteriorMean) {
  const TimeGrid g = make_grid(0.0, 1.0, 4);
  const LatentPrior prior(g, 0.3);
  Rng rng(3);
  const LatentSocialPaths paths = sample_latent_paths(1, prior, 1.0, rng);
  const InverseGammaPrior hyper{3.0, 2.0};
  const InverseGammaParams post = sigma_w2_posterior(paths, prior, hyper);
  const double mean = post.scale / (post.shape - 1.0);
  const double sd = mean / std::sqrt(post.shape - 2.0);
  double total = 0.0;
  const int n = 50000;
  for (int k = 0; k < n; ++k) total += gibbs_sigma_w2(paths, prior, hyper, rng);
  EXPECT_NEAR(total / n, mean, 3.0 * sd / std::sqrt(n));
}

TEST(Pcn, ConstantLikelihoodAlwaysAccepts) {
  Rng rng(4);
  Eigen::MatrixXd state = Eigen::MatrixXd::Zero(5, 2);
  std::size_t accepted = 0;
  for (int k = 0; k < 10000; ++k) {
    auto out = pcn_step(state, -3.0, 0.1, [](const Eigen::MatrixXd&) { return -3.0; },
                        [](Rng& r) { return standard_normal(5, 2, r); }, rng);
    accepted += out.accepted;
    state = out.state;
  }
  EXPECT_EQ(accepted, 10000u);
}

TEST(Pcn, RejectsNonPositiveStep) {
  Rng rng(5);
  auto ll = [](const Eigen::MatrixXd&) { return 0.0; };
  auto draw = [](Rng& r) { return standard_normal(1, 1, r); };
  EXPECT_THROW(pcn_step(Eigen::MatrixXd::Zero(1, 1), 0.0, 0.0, ll, draw, rng), std::invalid_argument);
  EXPECT_EQ(pcn_proposal(Eigen::MatrixXd::Constant(2, 2, 3.0), Eigen::MatrixXd::Zero(2, 2), 1.0),
            Eigen::MatrixXd::Zero(2, 2));
}

TEST(PcnProperty, ConstantLikelihoodPreservesPriorVariance) {
  const TimeGrid g = make_grid(0.0, 1.0, 30);
  const LatentPrior prior(g, 4.0 / 15.0);
  const double sigma_w2 = 2.0;
  const int chains = 2000;
  std::vector<Eigen::MatrixXd> finals;
  Rng rng(6);
  for (int c = 0; c < chains; ++c) {
    Eigen::MatrixXd state = Eigen::MatrixXd::Zero(30, 2);
    for (int k = 0; k < 400; ++k)
      state = pcn_step(state, 0.0, 0.1, [](const Eigen::MatrixXd&) { return 0.0; },
                       [&](Rng& r) { return Eigen::MatrixXd(std::sqrt(sigma_w2) * prior.draw(r)); }, rng)
                  .state;
    finals.push_back(state);
  }
  for (Eigen::Index k : {0, 14, 29}) {
    double s2 = 0.0;
    for (const auto& f : finals) s2 += f(k, 0) * f(k, 0) + f(k, 1) * f(k, 1);
    const double target = sigma_w2 * prior.covariance()(k, k);
    const double n = 2.0 * chains;
    EXPECT_NEAR(s2 / n, target, 3.0 * target * std::sqrt(2.0 / n)) << "knot " << k;
  }
}

TEST(IntegratedLikelihood, MatchesDirectEvaluation) {
  const TimeGrid g = make_grid(0.0, 1.0, 25);
  Rng rng(7);
  const LatentSocialPaths paths = sample_latent_paths(2, g, 0.5, 4.0 / 15.0, rng);
  const SocialNetwork net = weights_from_paths(paths);
  const Telemetry data = simulated(g, net, {{0.1, 0.35, 0.6, 0.9}, {0.2, 0.5, 0.8}}, 8);
  MovementParams p;
  p.sigma0_sq = 1.7;
  for (auto variant : {ModelVariant::dependent, ModelVariant::independent}) {
    const SocialNetwork* np = variant == ModelVariant::dependent ? &net : nullptr;
    const IntegratedLikelihood model(data, g, ChainConfig{}, variant);
    const KernelMatrix h = build_effective_H(ChainConfig{}, np, p.phi_inl, g, data.nodes(), 2, variant);
    const double direct = log_likelihood(data, marginal_covariance(h, p, g));
    EXPECT_NEAR(model.evaluate(p, np), direct, 1e-9 * std::abs(direct));
    EXPECT_EQ(model.effective(model.inertial(p.phi_inl), p.phi_inl, np), model.effective(p.phi_inl, np));
  }
}

TEST(RunMcmc, RecordCountsAndPositivity) {
  const TimeGrid g = make_grid(0.0, 1.0, 20);
  const Telemetry data = simulated(g, SocialNetwork::constant_pair(g, 0.5), {{0.1, 0.5, 0.9}, {0.3, 0.7}}, 9);
  MCMCConfig c = small_config(20, ModelVariant::dependent);
  c.thin = 4;
  const PosteriorChain chain = run_mcmc(data, PriorSpec{}, c);
  EXPECT_EQ(chain.records.size(), (c.iterations - c.burn_in) / c.thin);
  for (const auto& r : chain.records) {
    EXPECT_NO_THROW(r.params.validate());
    ASSERT_EQ(r.latent.size(), 2u);
    EXPECT_EQ(r.latent[0].rows(), 20);
    EXPECT_EQ(r.latent[0].cols(), 2);
  }
  EXPECT_TRUE(chain.touched_latent);
  EXPECT_EQ(chain.acceptance.at("latent").proposed, 2 * c.iterations);
}

TEST(RunMcmc, IndependentVariantNeverTouchesLatentState) {
  const TimeGrid g = make_grid(0.0, 1.0, 20);
  const Telemetry data = simulated(g, SocialNetwork::empty(g, 2), {{0.1, 0.5, 0.9}, {0.3, 0.7}}, 10);
  const PosteriorChain chain = run_mcmc(data, PriorSpec{}, small_config(20, ModelVariant::independent));
  EXPECT_FALSE(chain.touched_latent);
  EXPECT_EQ(chain.acceptance.count("latent"), 0u);
  for (const auto& r : chain.records) EXPECT_TRUE(r.latent.empty());
}

TEST(RunMcmc, SeedDeterminismAcrossThinning) {
  const TimeGrid g = make_grid(0.0, 1.0, 20);
  const Telemetry data = simulated(g, SocialNetwork::constant_pair(g, 0.5), {{0.1, 0.5, 0.9}, {0.3, 0.7}}, 11);
  MCMCConfig c = small_config(20, ModelVariant::dependent);
  const PosteriorChain a = run_mcmc(data, PriorSpec{}, c);
  const PosteriorChain b = run_mcmc(data, PriorSpec{}, c);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    EXPECT_EQ(a.records[k].params.phi_inl, b.records[k].params.phi_inl);
    EXPECT_EQ(a.records[k].params.ratio, b.records[k].params.ratio);
    EXPECT_EQ(a.records[k].log_likelihood, b.records[k].log_likelihood);
    EXPECT_EQ(a.records[k].latent, b.records[k].latent);
  }
  c.thin = 5;
  const PosteriorChain t = run_mcmc(data, PriorSpec{}, c);
  ASSERT_EQ(t.records.size(), a.records.size() / 5);
  for (std::size_t k = 0; k < t.records.size(); ++k) {
    const auto& full = a.records[5 * k + 4];
    EXPECT_EQ(t.records[k].params.sigma_s2, full.params.sigma_s2);
    EXPECT_EQ(t.records[k].latent, full.latent);
  }
  c.seed = 100;
  const PosteriorChain d = run_mcmc(data, PriorSpec{}, c);
  EXPECT_NE(d.records.back().params.phi_inl, a.records.back().params.phi_inl);
}

TEST(RunMcmc, FixedParametersStayFixed) {
  const TimeGrid g = make_grid(0.0, 1.0, 20);
  const Telemetry data = simulated(g, SocialNetwork::constant_pair(g, 0.5), {{0.1, 0.5, 0.9}, {0.3, 0.7}}, 12);
  MCMCConfig c = small_config(20, ModelVariant::dependent);
  c.initial = MovementParams{};
  c.fixed.sigma_s2 = c.fixed.ratio = c.fixed.sigma_w2 = true;
  const PosteriorChain chain = run_mcmc(data, PriorSpec{}, c);
  for (const auto& r : chain.records) {
    EXPECT_EQ(r.params.sigma_s2, c.initial->sigma_s2);
    EXPECT_EQ(r.params.ratio, c.initial->ratio);
    EXPECT_EQ(r.params.sigma_w2, c.initial->sigma_w2);
  }
}

TEST(RunMcmc, LikelihoodFailureReportsIteration) {
  const TimeGrid g = make_grid(0.0, 1.0, 10);
  const Telemetry data = simulated(g, SocialNetwork::empty(g, 1), {{0.2, 0.5, 0.8}}, 13);
  MCMCConfig c = small_config(10, ModelVariant::independent);
  c.iterations = 500;
  c.burn_in = 0;
  c.adapt = false;
  MovementParams init;
  init.ratio = 1e305;
  c.initial = init;
  c.scales.ratio = 50.0;
  c.fixed.phi_inl = c.fixed.sigma_s2 = c.fixed.sigma0_sq = true;
  try {
    run_mcmc(data, PriorSpec{}, c);
    FAIL() << "expected a numerical failure";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration "), std::string::npos) << e.what();
  }
}

TEST(RunMcmc, FlatLikelihoodRecoversPhiPrior) {
  const TimeGrid g = make_grid(0.0, 1.0, 20);
  Telemetry data;
  data.tracks.push_back({"1", {0.5}, {0.5}, {0.3}, {-0.2}});
  MCMCConfig c = small_config(20, ModelVariant::independent);
  c.iterations = 42000;
  c.burn_in = 2000;
  MovementParams init;
  init.sigma_s2 = 1e6;
  init.ratio = 1e-5;
  c.initial = init;
  c.fixed.sigma_s2 = c.fixed.ratio = c.fixed.sigma0_sq = true;
  const PriorSpec priors;
  const PosteriorChain chain = run_mcmc(data, priors, c);
  for (double q : {0.1, 0.25, 0.5, 0.75, 0.9}) {
    const double x = gamma_quantile(priors.phi_inl, q);
    std::vector<double> ind;
    for (const auto& r : chain.records) ind.push_back(r.params.phi_inl <= x ? 1.0 : 0.0);
    const double f = std::accumulate(ind.begin(), ind.end(), 0.0) / static_cast<double>(ind.size());
    EXPECT_NEAR(f, q, 3.5 * batch_se(ind)) << "quantile " << q;
  }
}

TEST(RunMcmc, PhiPosteriorMatchesQuadrature) {
  const TimeGrid g = make_grid(0.0, 1.0, 20);
  const std::vector<double> times = knot_times(g, {0, 2, 4, 6, 8, 11, 13, 15, 17, 19});
  MovementParams truth;
  truth.phi_inl = 0.05;
  const Telemetry data = simulated(g, SocialNetwork::empty(g, 1), {times}, 14, truth);
  const PriorSpec priors;

  // Posterior density of u = log φ on a fine grid.
  const int points = 4000;
  const double lo = std::log(2e-4), hi = std::log(0.4);
  std::vector<double> u(points), logd(points);
  for (int k = 0; k < points; ++k) {
    u[k] = lo + (hi - lo) * k / (points - 1);
    MovementParams p = truth;
    p.phi_inl = std::exp(u[k]);
    const KernelMatrix h = build_effective_H(ChainConfig{}, nullptr, p.phi_inl, g, data.nodes(), 1,
                                             ModelVariant::independent);
    logd[k] = log_likelihood(data, marginal_covariance(h, p, g)) + priors.phi_inl.log_density(p.phi_inl) + u[k];
  }
  const double top = *std::max_element(logd.begin(), logd.end());
  std::vector<double> cdf(points, 0.0);
  for (int k = 1; k < points; ++k)
    cdf[k] = cdf[k - 1] + 0.5 * (std::exp(logd[k] - top) + std::exp(logd[k - 1] - top)) * (u[k] - u[k - 1]);
  for (double& c : cdf) c /= cdf.back();
  const int bins = 10;
  std::vector<double> edges;   // φ values at posterior deciles
  for (int b = 1; b < bins; ++b) {
    const double target = static_cast<double>(b) / bins;
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), target);
    const auto k = static_cast<std::size_t>(it - cdf.begin());
    const double frac = (target - cdf[k - 1]) / (cdf[k] - cdf[k - 1]);
    edges.push_back(std::exp(u[k - 1] + frac * (u[k] - u[k - 1])));
  }

  MCMCConfig c = small_config(20, ModelVariant::independent);
  c.iterations = 42000;
  c.burn_in = 2000;
  c.initial = truth;
  c.fixed.sigma_s2 = c.fixed.ratio = c.fixed.sigma0_sq = true;
  const PosteriorChain chain = run_mcmc(data, priors, c);
  std::vector<double> counts(bins, 0.0);
  for (const auto& r : chain.records)
    counts[std::upper_bound(edges.begin(), edges.end(), r.params.phi_inl) - edges.begin()] += 1.0;
  double tv = 0.0;
  for (double n : counts) tv += std::abs(n / static_cast<double>(chain.records.size()) - 1.0 / bins);
  EXPECT_LE(0.5 * tv, 0.05);
}

TEST(RunMcmcProperty, GewekeSuccessiveConditionalPreservesPriors) {
  const TimeGrid g = make_grid(0.0, 1.0, 30);
  const std::vector<std::vector<double>> times{{0.05, 0.3, 0.55, 0.8, 0.95}, {0.1, 0.4, 0.6, 0.85}};
  PriorSpec priors;
  priors.phi_inl = {20.0, 400.0};
  priors.sigma_s2 = {10.0, 0.45};
  priors.ratio = {10.0, 450.0};
  priors.sigma0_sq = {10.0, 9.0};
  priors.sigma_w2 = {10.0, 18.0};
  const double phi_w = 4.0 / 15.0;
  const LatentPrior latent_prior(g, phi_w);

  Rng rng(15);
  MovementParams theta;
  theta.phi_inl = std::gamma_distribution<double>(priors.phi_inl.shape, 1.0 / priors.phi_inl.rate)(rng);
  theta.sigma_s2 = inverse_gamma_draw(priors.sigma_s2.shape, priors.sigma_s2.scale, rng);
  theta.ratio = inverse_gamma_draw(priors.ratio.shape, priors.ratio.scale, rng);
  theta.sigma0_sq = inverse_gamma_draw(priors.sigma0_sq.shape, priors.sigma0_sq.scale, rng);
  theta.sigma_w2 = inverse_gamma_draw(priors.sigma_w2.shape, priors.sigma_w2.scale, rng);
  theta.phi_w = phi_w;
  LatentSocialPaths latent = sample_latent_paths(2, latent_prior, theta.sigma_w2, rng);

  const int sweeps = 20000;
  std::vector<MovementParams> trace;
  trace.reserve(sweeps);
  MCMCConfig c = small_config(30, ModelVariant::dependent);
  c.iterations = 1;
  c.burn_in = 0;
  c.adapt = false;
  c.phi_w = phi_w;
  c.scales = {0.2, 0.2, 0.2, 0.2};
  for (int it = 0; it < sweeps; ++it) {
    const Telemetry data = simulate(theta, weights_from_paths(latent), g, times, rng).data;
    c.seed = derive_seed(15, {static_cast<std::uint64_t>(it)});
    c.initial = theta;
    c.initial_latent = latent.positions;
    const PosteriorChain chain = run_mcmc(data, priors, c);
    theta = chain.records[0].params;
    latent.positions = chain.records[0].latent;
    latent.sigma_w2 = theta.sigma_w2;
    trace.push_back(theta);
  }

  struct Marginal {
    const char* name;
    double MovementParams::*field;
    std::function<double(double)> quantile;
  };
  const std::vector<Marginal> marginals{
      {"phi_inl", &MovementParams::phi_inl, [&](double q) { return gamma_quantile(priors.phi_inl, q); }},
      {"sigma_s2", &MovementParams::sigma_s2, [&](double q) { return ig_quantile(priors.sigma_s2, q); }},
      {"ratio", &MovementParams::ratio, [&](double q) { return ig_quantile(priors.ratio, q); }},
      {"sigma0_sq", &MovementParams::sigma0_sq, [&](double q) { return ig_quantile(priors.sigma0_sq, q); }},
      {"sigma_w2", &MovementParams::sigma_w2, [&](double q) { return ig_quantile(priors.sigma_w2, q); }}};
  for (const auto& mg : marginals)
    for (double q : {0.25, 0.5, 0.75}) {
      const double x = mg.quantile(q);
      std::vector<double> ind;
      for (const auto& t : trace) ind.push_back(t.*(mg.field) <= x ? 1.0 : 0.0);
      const double f = std::accumulate(ind.begin(), ind.end(), 0.0) / sweeps;
      EXPECT_NEAR(f, q, 3.5 * batch_se(ind)) << mg.name << " at quantile " << q;
    }
  EXPECT_NEAR(gamma_cdf(priors.phi_inl, gamma_quantile(priors.phi_inl, 0.3)), 0.3, 1e-12);
}

class ConditionalMomentsTest : public ::testing::Test {
 protected:
  TimeGrid g = make_grid(0.0, 1.0, 16);
  ChainRecord rec;
  Telemetry data;
  std::vector<Node> pred{{0, 0.07}, {0, 0.5}, {1, 0.33}, {1, 1.0}};

  void SetUp() override {
    Rng rng(16);
    rec.params.phi_inl = 0.06;
    rec.params.sigma0_sq = 1.5;
    rec.params.sigma_w2 = 0.4;
    rec.latent = sample_latent_paths(2, g, rec.params.sigma_w2, rec.params.phi_w, rng).positions;
    data = simulated(g, record_network(rec, g, 2), {{0.0, 0.2, 0.61}, {0.15, 0.45, 0.9}}, 17, rec.params);
  }

  // Dense joint-Gaussian partition, built without the library's covariance helpers.
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> oracle(ModelVariant variant) const {
    std::vector<Node> all = data.nodes();
    const auto n_obs = static_cast<Eigen::Index>(all.size());
    all.insert(all.end(), pred.begin(), pred.end());
    std::vector<KernelMatrix> stages{discretize(KernelSpec::brownian(), g.knots(), g, 2)};
    if (variant == ModelVariant::dependent)
      stages.push_back(discretize(KernelSpec::social(std::make_shared<const SocialNetwork>(record_network(rec, g, 2))),
                                  g.knots(), g, 2));
    stages.push_back(discretize_nodes(KernelSpec::inertial(rec.params.phi_inl), all, g, 2));
    const Eigen::MatrixXd h = compose(stages).values;
    Eigen::VectorXd d = Eigen::VectorXd::Ones(32);
    d(0) = d(16) = rec.params.sigma0_sq;
    const Eigen::MatrixXd joint = rec.params.sigma_mu2() * g.step() * h * d.asDiagonal() * h.transpose();
    Eigen::MatrixXd soo = joint.topLeftCorner(n_obs, n_obs);
    soo.diagonal().array() += rec.params.sigma_s2;
    const Eigen::MatrixXd spo = joint.bottomLeftCorner(4, n_obs);
    const Eigen::MatrixXd inv = soo.inverse();
    return {spo * inv * data.positions(), joint.bottomRightCorner(4, 4) - spo * inv * spo.transpose()};
  }
};

TEST_F(ConditionalMomentsTest, MatchesDenseOracle) {
  for (auto variant : {ModelVariant::dependent, ModelVariant::independent}) {
    const auto [mean, cov] = oracle(variant);
    const ConditionalMoments m = conditional_moments(rec, data, pred, g, ChainConfig{}, variant);
    EXPECT_LT((m.mean - mean).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((m.covariance - cov).cwiseAbs().maxCoeff(), 1e-10);
    InertialCache cache;
    const ConditionalMoments cached = conditional_moments(rec, data, pred, g, ChainConfig{}, variant, &cache);
    EXPECT_LT((cached.mean - m.mean).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LT((cached.covariance - m.covariance).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST_F(ConditionalMomentsTest, ConditioningReducesVariance) {
  const ConditionalMoments m = conditional_moments(rec, data, pred, g, ChainConfig{}, ModelVariant::dependent);
  const SocialNetwork net = record_network(rec, g, 2);
  MovementParams noiseless = rec.params;
  const KernelMatrix h = build_effective_H(ChainConfig{}, &net, rec.params.phi_inl, g, pred, 2);
  const Eigen::MatrixXd prior = marginal_covariance(h, noiseless, g);
  for (Eigen::Index k = 0; k < 4; ++k) EXPECT_LE(m.covariance(k, k), prior(k, k) - rec.params.sigma_s2 + 1e-12);
}

TEST_F(ConditionalMomentsTest, NoiselessLimitInterpolatesObservations) {
  ChainRecord tight = rec;
  tight.params.sigma_s2 = 1e-12;
  tight.params.ratio = 10.0 / 1e-12;
  const std::vector<Node> at_obs = data.nodes();
  const ConditionalMoments m = conditional_moments(tight, data, at_obs, g, ChainConfig{}, ModelVariant::dependent);
  EXPECT_LT((m.mean - data.positions()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST_F(ConditionalMomentsTest, RejectsPredictionOutsideGrid) {
  Rng rng(1);
  EXPECT_THROW(composition_sample(rec, data, {{0, 1.5}}, g, ChainConfig{}, ModelVariant::dependent, rng),
               std::invalid_argument);
  EXPECT_THROW(composition_sample(rec, data, {}, g, ChainConfig{}, ModelVariant::dependent, rng),
               std::invalid_argument);
}

TEST_F(ConditionalMomentsTest, DrawsFollowConditionalMoments) {
  const ConditionalMoments m = conditional_moments(rec, data, pred, g, ChainConfig{}, ModelVariant::dependent);
  Rng rng(18);
  const int n = 200000;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(4, 2);
  for (int k = 0; k < n; ++k) sum += composition_sample(rec, data, pred, g, ChainConfig{}, ModelVariant::dependent, rng);
  sum /= n;
  for (Eigen::Index r = 0; r < 4; ++r)
    for (int c = 0; c < 2; ++c)
      EXPECT_NEAR(sum(r, c), m.mean(r, c), 3.0 * std::sqrt(m.covariance(r, r) / n) + 1e-12);
}
