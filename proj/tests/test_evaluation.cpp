#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "pcc/evaluation.hpp"

using namespace pcc;

namespace {

std::vector<Eigen::MatrixXd> isotropic_draws(std::size_t n, Eigen::Index knots, Rng& rng, const Eigen::MatrixXd& mean) {
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back(mean + standard_normal(knots, 2, rng));
  return out;
}

Eigen::MatrixXd toy_path(const std::vector<double>& t, double offset) {
  Eigen::MatrixXd p(static_cast<Eigen::Index>(t.size()), 2);
  for (std::size_t k = 0; k < t.size(); ++k) {
    p(static_cast<Eigen::Index>(k), 0) = std::sin(2.0 * std::numbers::pi * t[k]) + offset * t[k];
    p(static_cast<Eigen::Index>(k), 1) = std::cos(3.0 * t[k]) + offset * t[k] * t[k];
  }
  return p;
}

StudyConfig tiny_study() {
  StudyConfig c;
  c.weights = {0.0, 0.9};
  c.replicates = 2;
  c.path_draws = 100;
  c.observations = 8;
  c.grid_points = 12;
  c.threads = 1;
  return c;
}

MCMCConfig tiny_mcmc() {
  MCMCConfig m;
  m.iterations = 160;
  m.burn_in = 60;
  m.fixed.sigma_w2 = true;
  return m;
}

}  // namespace

TEST(Quantile, TypeSevenInterpolation) {
  const std::vector<double> v{4.0, 1.0, 3.0, 2.0};
  EXPECT_DOUBLE_EQ(quantile(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile(v, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(v, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile({7.0}, 0.3), 7.0);
  EXPECT_THROW(quantile({}, 0.5), std::invalid_argument);
  EXPECT_THROW(quantile(v, 1.5), std::invalid_argument);
}

TEST(Spe, Examples) {
  const Eigen::MatrixXd truth = Eigen::MatrixXd::Random(9, 2);
  EXPECT_EQ(spe(truth, truth), 0.0);
  Eigen::MatrixXd shifted = truth;
  shifted.col(0).array() += 3.0;
  shifted.col(1).array() += 4.0;
  EXPECT_NEAR(spe(shifted, truth), 25.0, 1e-12);
  EXPECT_THROW(spe(Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 2)), std::invalid_argument);
  EXPECT_THROW(spe(truth, truth.topRows(3)), std::invalid_argument);
}

TEST(Spe, RefinementChangesLittle) {
  auto knots = [](std::size_t n) {
    std::vector<double> t;
    for (std::size_t k = 0; k < n; ++k) t.push_back(0.3 + 0.4 * static_cast<double>(k) / static_cast<double>(n - 1));
    return t;
  };
  const auto coarse = knots(41), fine = knots(81);
  const double a = spe(toy_path(coarse, 0.5), toy_path(coarse, 0.0));
  const double b = spe(toy_path(fine, 0.5), toy_path(fine, 0.0));
  EXPECT_LT(std::abs(a - b) / b, 0.01);
}

TEST(SpeProperty, NonNegativeAndZeroOnlyOnAgreement) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::MatrixXd a = standard_normal(6, 2, rng);
    Eigen::MatrixXd b = a;
    EXPECT_EQ(spe(a, b), 0.0);
    b(trial % 6, trial % 2) += 1e-6;
    EXPECT_GT(spe(a, b), 0.0);
    EXPECT_GE(spe(a, standard_normal(6, 2, rng)), 0.0);
  }
}

TEST(Accrr, IdenticalDrawsGiveZero) {
  const std::vector<Eigen::MatrixXd> draws(150, Eigen::MatrixXd::Constant(5, 2, 1.3));
  EXPECT_EQ(accrr(draws), 0.0);
}

TEST(Accrr, IsotropicNormalMatchesChiSquareQuantile) {
  Rng rng(2);
  const Eigen::Index knots = 5;
  const auto draws = isotropic_draws(10000, knots, rng, Eigen::MatrixXd::Zero(knots, 2));
  const double r = std::sqrt(-2.0 * std::log(0.05));   // χ²₂ 0.95 quantile, square-rooted
  EXPECT_NEAR(r, 2.4477, 1e-4);
  // quantile standard error sqrt(q(1-q)/n) / f(r), with f the Rayleigh density
  const double se = std::sqrt(0.05 * 0.95 / 10000.0) / (r * std::exp(-0.5 * r * r));
  EXPECT_NEAR(accrr(draws), r, 3.0 * se / std::sqrt(static_cast<double>(knots)));
}

TEST(Accrr, LevelMonotone) {
  Rng rng(3);
  const auto draws = isotropic_draws(500, 8, rng, Eigen::MatrixXd::Zero(8, 2));
  const Eigen::VectorXd lo = credible_radii(draws, 0.5);
  const Eigen::VectorXd hi = credible_radii(draws, 0.95);
  for (Eigen::Index k = 0; k < lo.size(); ++k) EXPECT_LE(lo(k), hi(k));
}

TEST(Accrr, RequiresOneHundredDraws) {
  Rng rng(4);
  EXPECT_THROW(accrr(isotropic_draws(99, 3, rng, Eigen::MatrixXd::Zero(3, 2))), InsufficientSampleError);
  EXPECT_NO_THROW(accrr(isotropic_draws(100, 3, rng, Eigen::MatrixXd::Zero(3, 2))));
}

TEST(MetricsProperty, TranslationInvariance) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd mean = standard_normal(7, 2, rng);
    const auto draws = isotropic_draws(200, 7, rng, mean);
    const Eigen::MatrixXd truth = standard_normal(7, 2, rng);
    Eigen::RowVector2d shift;
    shift << 50.0 * uniform01(rng) - 25.0, 50.0 * uniform01(rng) - 25.0;
    std::vector<Eigen::MatrixXd> moved;
    for (const auto& d : draws) moved.push_back(d.rowwise() + shift);
    const Eigen::MatrixXd moved_truth = truth.rowwise() + shift;
    EXPECT_NEAR(accrr(moved), accrr(draws), 1e-9);
    EXPECT_NEAR(spe(path_mean(moved), moved_truth), spe(path_mean(draws), truth), 1e-9);
  }
}

TEST(GapSpec, CenteredGap) {
  const TimeGrid g = make_grid(0.0, 1.0, 11);
  const GapSpec gap = GapSpec::centered(1, 0.4, g);
  EXPECT_EQ(gap.individual, 1u);
  EXPECT_NEAR(gap.from, 0.3, 1e-15);
  EXPECT_NEAR(gap.to, 0.7, 1e-15);
  EXPECT_NEAR(gap.fraction(g), 0.4, 1e-15);
  EXPECT_EQ(gap.knots(g), (std::vector<std::size_t>{3, 4, 5, 6, 7}));
  EXPECT_TRUE(gap.covers(0.5));
  EXPECT_FALSE(gap.covers(0.8));
  EXPECT_THROW(GapSpec::centered(1, 0.0, g), std::invalid_argument);
  EXPECT_THROW(GapSpec::centered(1, 1.0, g), std::invalid_argument);
}

TEST(StudyConfig, DeskScaleDefaults) {
  const StudyConfig c;
  EXPECT_EQ(c.weights, (std::vector<double>{0.0, 0.5, 0.9}));
  EXPECT_EQ(c.gap_fractions, (std::vector<double>{0.4}));
  EXPECT_EQ(c.replicates, 10u);
  EXPECT_EQ(c.path_draws, 1000u);
  EXPECT_EQ(c.observations, 60u);
  EXPECT_EQ(c.grid_points, 200u);
  EXPECT_EQ(c.cells(), 3u);
  EXPECT_NO_THROW(c.validate());
}

TEST(StudyConfig, SimulationParameterSet) {
  const StudyConfig c;
  ASSERT_EQ(c.tortuosity.size(), 1u);
  EXPECT_DOUBLE_EQ(c.tortuosity[0], 0.04 / 3.0);
  EXPECT_EQ(MovementParams::simulation_truth(false).phi_inl, 0.04);
  EXPECT_EQ(c.truth.sigma0_sq, 1.0);
  EXPECT_EQ(c.truth.ratio, 800.0);
  EXPECT_EQ(c.truth.sigma_s2, 0.0125);
  EXPECT_DOUBLE_EQ(c.truth.phi_w, 4.0 / 15.0);
  EXPECT_EQ(c.truth.sigma_w2, 10.0);
}

TEST(StudyConfig, Validation) {
  for (auto mutate : std::vector<void (*)(StudyConfig&)>{
           [](StudyConfig& c) { c.replicates = 0; }, [](StudyConfig& c) { c.weights = {1.2}; },
           [](StudyConfig& c) { c.gap_fractions = {1.0}; }, [](StudyConfig& c) { c.tortuosity = {0.0}; },
           [](StudyConfig& c) { c.path_draws = 50; }, [](StudyConfig& c) { c.weights.clear(); }}) {
    StudyConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), std::invalid_argument);
  }
}

TEST(RunStudy, SchemaAndRatioOrientation) {
  const StudyConfig c = tiny_study();
  const StudyResult r = run_study(c, PriorSpec{}, tiny_mcmc(), 7);
  EXPECT_TRUE(r.failures.empty());
  ASSERT_EQ(r.rows.size(), c.cells() * c.replicates * 4);
  std::set<std::string> models, metrics;
  for (const auto& row : r.rows) {
    models.insert(row.model);
    metrics.insert(row.metric);
    EXPECT_GE(row.value, 0.0);
  }
  EXPECT_EQ(models, (std::set<std::string>{"IP-DEP", "IP-IND"}));
  EXPECT_EQ(metrics, (std::set<std::string>{"spe", "accrr"}));
  ASSERT_EQ(r.summary.size(), c.cells() * 2);
  for (const auto& s : r.summary) {
    EXPECT_EQ(s.numerator, "IP-IND");
    EXPECT_EQ(s.denominator, "IP-DEP");
    EXPECT_EQ(s.replicates, c.replicates);
    EXPECT_LE(s.q25, s.median);
    EXPECT_LE(s.median, s.q75);
    // recompute the median ratio from the raw rows
    const std::string metric = s.metric == "spe_ratio" ? "spe" : "accrr";
    std::vector<double> ratios;
    for (std::size_t rep = 0; rep < c.replicates; ++rep) {
      double dep = 0.0, ind = 0.0;
      for (const auto& row : r.rows)
        if (row.cell.index == s.cell.index && row.replicate == rep && row.metric == metric)
          (row.model == "IP-DEP" ? dep : ind) = row.value;
      ratios.push_back(ind / dep);
    }
    EXPECT_DOUBLE_EQ(s.median, quantile(ratios, 0.5));
  }
}

TEST(RunStudy, DeterministicAcrossThreadCounts) {
  StudyConfig c = tiny_study();
  const StudyResult a = run_study(c, PriorSpec{}, tiny_mcmc(), 11);
  c.threads = 3;
  const StudyResult b = run_study(c, PriorSpec{}, tiny_mcmc(), 11);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    EXPECT_EQ(a.rows[k].value, b.rows[k].value);
    EXPECT_EQ(a.rows[k].model, b.rows[k].model);
  }
}

TEST(RunStudy, FailuresAreRecordedNotDropped) {
  StudyConfig c = tiny_study();
  c.grid_points = 4;                  // knots 0, 1/3, 2/3, 1
  c.weights = {0.5};
  c.gap_fractions = {0.2, 0.5};       // the narrow gap holds no knot
  std::vector<std::pair<std::size_t, std::size_t>> seen;
  const StudyResult r =
      run_study(c, PriorSpec{}, tiny_mcmc(), 3, [&](const StudyCell& cell, std::size_t rep) { seen.push_back({cell.index, rep}); });
  EXPECT_EQ(seen.size(), 4u);
  ASSERT_EQ(r.failures.size(), 2u);
  for (const auto& f : r.failures) {
    EXPECT_EQ(f.cell.gap_fraction, 0.2);
    EXPECT_NE(f.message.find("gap"), std::string::npos);
  }
  EXPECT_EQ(r.rows.size(), 2u * 4u);
  for (const auto& s : r.summary) {
    if (s.cell.gap_fraction == 0.2) {
      EXPECT_EQ(s.replicates, 0u);
      EXPECT_EQ(s.failures, 2u);
      EXPECT_TRUE(std::isnan(s.median));
    } else {
      EXPECT_EQ(s.replicates, 2u);
      EXPECT_EQ(s.failures, 0u);
    }
  }
}
