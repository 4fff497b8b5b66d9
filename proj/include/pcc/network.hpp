#ifndef PCC_NETWORK_HPP
#define PCC_NETWORK_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "pcc/time_grid.hpp"

namespace pcc {

/// Time-indexed symmetric edge weights w_ij(τ) in [0, 1] with unit diagonal,
/// one p x p matrix per grid knot.
class SocialNetwork {
 public:
  SocialNetwork() = default;

  SocialNetwork(TimeGrid grid, std::vector<Eigen::MatrixXd> weights)
      : grid_(std::move(grid)), weights_(std::move(weights)) {
    if (weights_.size() != grid_.size())
      throw std::invalid_argument("SocialNetwork: one weight matrix per knot required");
    individuals_ = weights_.empty() ? 0 : static_cast<std::size_t>(weights_.front().rows());
    for (const auto& w : weights_) {
      if (static_cast<std::size_t>(w.rows()) != individuals_ ||
          static_cast<std::size_t>(w.cols()) != individuals_)
        throw std::invalid_argument("SocialNetwork: weight matrices must be p x p");
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        if (w(i, i) != 1.0) throw std::invalid_argument("SocialNetwork: diagonal must be 1");
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
          if (!(w(i, j) >= 0.0 && w(i, j) <= 1.0))
            throw std::invalid_argument("SocialNetwork: weights must lie in [0, 1]");
          if (w(i, j) != w(j, i)) throw std::invalid_argument("SocialNetwork: weights must be symmetric");
        }
      }
    }
  }

  /// No edges: the social stage reduces to the identity.
  static SocialNetwork empty(const TimeGrid& grid, std::size_t p) {
    return SocialNetwork(grid, std::vector<Eigen::MatrixXd>(grid.size(), Eigen::MatrixXd::Identity(p, p)));
  }

  /// The same weight matrix at every knot.
  static SocialNetwork constant(const TimeGrid& grid, const Eigen::MatrixXd& w) {
    return SocialNetwork(grid, std::vector<Eigen::MatrixXd>(grid.size(), w));
  }

  /// Two individuals with a time-constant tie w12.
  static SocialNetwork constant_pair(const TimeGrid& grid, double w12) {
    Eigen::MatrixXd w(2, 2);
    w << 1.0, w12, w12, 1.0;
    return constant(grid, w);
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t individuals() const noexcept { return individuals_; }
  std::size_t knots() const noexcept { return weights_.size(); }
  const Eigen::MatrixXd& at(std::size_t knot) const { return weights_.at(knot); }
  double weight(std::size_t knot, std::size_t i, std::size_t j) const {
    return weights_.at(knot)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  const std::vector<Eigen::MatrixXd>& weights() const noexcept { return weights_; }

  /// True when every off-diagonal weight is exactly zero.
  bool is_empty() const {
    for (const auto& w : weights_)
      if ((w - Eigen::MatrixXd::Identity(w.rows(), w.cols())).cwiseAbs().maxCoeff() != 0.0) return false;
    return true;
  }

  // Unchecked access for samplers that maintain the invariants themselves.
  Eigen::MatrixXd& mutable_at(std::size_t knot) { return weights_.at(knot); }

 private:
  TimeGrid grid_;
  std::size_t individuals_ = 0;
  std::vector<Eigen::MatrixXd> weights_;
};

/// Row-normalized social smoother at one knot: w_ij / sum_j w_ij.
inline Eigen::MatrixXd social_matrix(const SocialNetwork& net, std::size_t knot) {
  const Eigen::MatrixXd& w = net.at(knot);
  Eigen::MatrixXd s(w.rows(), w.cols());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const double total = w.row(i).sum();
    s.row(i) = w.row(i) / total;
  }
  return s;
}

/// Same, addressed by knot time.
inline Eigen::MatrixXd social_matrix(const SocialNetwork& net, double time, std::size_t p) {
  if (net.individuals() != p) throw std::invalid_argument("social_matrix: individual count mismatch");
  const std::size_t k = net.grid().find_knot(time);
  if (k == net.grid().size()) throw std::invalid_argument("social_matrix: time is not a grid knot");
  return social_matrix(net, k);
}

}  // namespace pcc

#endif  // PCC_NETWORK_HPP
