#ifndef PCC_SOCIAL_NETWORK_HPP
#define PCC_SOCIAL_NETWORK_HPP

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "pcc/kernels.hpp"
#include "pcc/linalg.hpp"
#include "pcc/network.hpp"
#include "pcc/random.hpp"
#include "pcc/time_grid.hpp"

namespace pcc {

inline constexpr Eigen::Index kLatentDimension = 2;

/// Weights below this are flushed to zero.
inline constexpr double kWeightFloor = 1e-300;

/// Gaussian prior of one latent path under unit dispersion: each coordinate is
/// N(0, Δτ H_w H_wᵀ) with H_w the gaussian(φ_w) kernel on the grid. The
/// factorization is done once here and shared by sampling and density evaluation.
class LatentPrior {
 public:
  LatentPrior(const TimeGrid& grid, double phi_w, bool normalize_rows = false)
      : grid_(grid), phi_w_(phi_w), normalize_rows_(normalize_rows) {
    if (!(phi_w > 0.0)) throw std::invalid_argument("LatentPrior: phi_w must be positive");
    const KernelMatrix hw = discretize(KernelSpec::gaussian(phi_w, normalize_rows), grid.knots(), grid, 1);
    covariance_ = grid.step() * (hw.values * hw.values.transpose());
    covariance_ = 0.5 * (covariance_ + covariance_.transpose()).eval();
    chol_ = jittered_cholesky(covariance_);
    lower_ = chol_.lower();
    log_det_ = chol_.log_determinant();
  }

  /// Shared instance per (grid, φ_w, normalization).
  static std::shared_ptr<const LatentPrior> shared(const TimeGrid& grid, double phi_w, bool normalize_rows = false) {
    static std::mutex mutex;
    static std::map<std::tuple<std::vector<double>, double, bool>, std::shared_ptr<const LatentPrior>> cache;
    std::lock_guard lock(mutex);
    auto key = std::make_tuple(grid.knots(), phi_w, normalize_rows);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    if (cache.size() > 16) cache.clear();
    auto prior = std::make_shared<const LatentPrior>(grid, phi_w, normalize_rows);
    cache.emplace(std::move(key), prior);
    return prior;
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  double phi_w() const noexcept { return phi_w_; }
  bool normalize_rows() const noexcept { return normalize_rows_; }
  Eigen::Index knots() const noexcept { return static_cast<Eigen::Index>(grid_.size()); }

  /// Unit-dispersion covariance Δτ H_w H_wᵀ (without jitter).
  const Eigen::MatrixXd& covariance() const noexcept { return covariance_; }
  double jitter() const noexcept { return chol_.jitter; }

  /// m x 2 draw at unit dispersion.
  Eigen::MatrixXd draw(Rng& rng) const { return lower_ * standard_normal(knots(), kLatentDimension, rng); }

  /// Sum over coordinates of xᵀ C⁻¹ x at unit dispersion.
  double quadratic_form(const Eigen::MatrixXd& path) const { return chol_.quadratic_form(path); }

  double log_density(const Eigen::MatrixXd& path, double sigma_w2) const {
    const double m = static_cast<double>(knots());
    const double d = static_cast<double>(path.cols());
    return -0.5 * (d * (m * std::log(2.0 * std::numbers::pi * sigma_w2) + log_det_) +
                   quadratic_form(path) / sigma_w2);
  }

 private:
  TimeGrid grid_;
  double phi_w_;
  bool normalize_rows_;
  Eigen::MatrixXd covariance_;
  JitteredCholesky chol_;
  Eigen::MatrixXd lower_;
  double log_det_ = 0.0;
};

/// Latent 2-D positions of each individual at the grid knots.
struct LatentSocialPaths {
  TimeGrid grid;
  double sigma_w2 = 1.0;
  double phi_w = 1.0;
  std::vector<Eigen::MatrixXd> positions;   // per individual, m x 2

  std::size_t individuals() const noexcept { return positions.size(); }

  void validate() const {
    for (const auto& pos : positions) {
      if (pos.rows() != static_cast<Eigen::Index>(grid.size()) || pos.cols() != kLatentDimension)
        throw std::invalid_argument("LatentSocialPaths: each path must be m x 2");
      if (!pos.allFinite()) throw std::invalid_argument("LatentSocialPaths: non-finite position");
    }
  }
};

inline LatentSocialPaths sample_latent_paths(std::size_t p, const LatentPrior& prior, double sigma_w2, Rng& rng) {
  if (!(sigma_w2 > 0.0)) throw std::invalid_argument("sample_latent_paths: sigma_w2 must be positive");
  LatentSocialPaths out{prior.grid(), sigma_w2, prior.phi_w(), {}};
  out.positions.reserve(p);
  const double scale = std::sqrt(sigma_w2);
  for (std::size_t i = 0; i < p; ++i) out.positions.push_back(scale * prior.draw(rng));
  return out;
}

inline LatentSocialPaths sample_latent_paths(std::size_t p, const TimeGrid& grid, double sigma_w2, double phi_w,
                                             Rng& rng) {
  if (!(phi_w > 0.0)) throw std::invalid_argument("sample_latent_paths: phi_w must be positive");
  return sample_latent_paths(p, *LatentPrior::shared(grid, phi_w), sigma_w2, rng);
}

/// g(x, y) = exp(-|x - y|^2).
inline double edge_weight(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  const double w = std::exp(-(a - b).squaredNorm());
  return w < kWeightFloor ? 0.0 : w;
}

inline SocialNetwork weights_from_paths(const LatentSocialPaths& paths) {
  paths.validate();
  const std::size_t p = paths.individuals();
  const std::size_t m = paths.grid.size();
  std::vector<Eigen::MatrixXd> w(m, Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p)));
  for (std::size_t k = 0; k < m; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = i + 1; j < p; ++j) {
        const double v = edge_weight(paths.positions[i].row(kk), paths.positions[j].row(kk));
        w[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        w[k](static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
      }
  }
  return SocialNetwork(paths.grid, std::move(w));
}

/// Recompute the edges touching individual i after its latent path changed.
inline void refresh_edges(SocialNetwork& net, const LatentSocialPaths& paths, std::size_t i) {
  const std::size_t p = paths.individuals();
  for (std::size_t k = 0; k < net.knots(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    Eigen::MatrixXd& w = net.mutable_at(k);
    for (std::size_t j = 0; j < p; ++j) {
      if (j == i) continue;
      const double v = edge_weight(paths.positions[i].row(kk), paths.positions[j].row(kk));
      w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  }
}

/// Latent positions held fixed in time so that the pairwise weights equal `w`.
/// Only defined for two individuals; a zero weight places them infinitely far apart,
/// so callers should prefer SocialNetwork::constant_pair for w = 0.
inline LatentSocialPaths pinned_pair_paths(const TimeGrid& grid, double w12, double sigma_w2, double phi_w) {
  if (!(w12 > 0.0 && w12 <= 1.0)) throw std::invalid_argument("pinned_pair_paths: weight must be in (0, 1]");
  const double distance = std::sqrt(-std::log(w12));
  LatentSocialPaths out{grid, sigma_w2, phi_w, {}};
  const auto m = static_cast<Eigen::Index>(grid.size());
  out.positions.push_back(Eigen::MatrixXd::Zero(m, kLatentDimension));
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(m, kLatentDimension);
  second.col(0).setConstant(distance);
  out.positions.push_back(second);
  return out;
}

inline double latent_log_prior(const LatentSocialPaths& paths, const LatentPrior& prior) {
  paths.validate();
  double total = 0.0;
  for (const auto& pos : paths.positions) total += prior.log_density(pos, paths.sigma_w2);
  return total;
}

inline double latent_log_prior(const LatentSocialPaths& paths) {
  return latent_log_prior(paths, *LatentPrior::shared(paths.grid, paths.phi_w));
}

}  // namespace pcc

#endif  // PCC_SOCIAL_NETWORK_HPP
