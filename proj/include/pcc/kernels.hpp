#ifndef PCC_KERNELS_HPP
#define PCC_KERNELS_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "pcc/bessel.hpp"
#include "pcc/errors.hpp"
#include "pcc/network.hpp"
#include "pcc/time_grid.hpp"

namespace pcc {

namespace kernel {

/// Step function 1{τ <= t}; convolving white noise gives Brownian motion.
struct Brownian {};

/// Matern nu = 1 correlation (|t-τ|/range) K1(|t-τ|/range).
struct InertialMatern {
  double range;
};

/// exp(-(τ - t)^2 / range^2).
struct Gaussian {
  double range;
};

/// One-sided linear ramp (1 + (τ - t)/range) on -range < τ - t <= 0.
struct Stream {
  double range;
};

/// Stage kernel of an integrated Wiener chain. By default (t-τ)_+^(order-1) / (order-1)!;
/// with as_printed set, the linear form (t - τ)/(order - 1) on the whole domain.
struct IntegratedWiener {
  int order;
  bool as_printed = false;
};

/// Smoothing across individuals at a single time, weights w_ij / |w_i.|.
struct Social {
  std::shared_ptr<const SocialNetwork> network;
};

}  // namespace kernel

using KernelKind = std::variant<kernel::Brownian, kernel::InertialMatern, kernel::Gaussian, kernel::Stream,
                                kernel::IntegratedWiener, kernel::Social>;

struct KernelSpec {
  KernelKind kind;
  bool normalize_rows = false;

  static KernelSpec brownian() { return {kernel::Brownian{}, false}; }
  static KernelSpec inertial(double range, bool normalize = true) {
    return {kernel::InertialMatern{range}, normalize};
  }
  static KernelSpec gaussian(double range, bool normalize = true) { return {kernel::Gaussian{range}, normalize}; }
  static KernelSpec stream(double range) { return {kernel::Stream{range}, false}; }
  static KernelSpec integrated_wiener(int order, bool as_printed = false) {
    return {kernel::IntegratedWiener{order, as_printed}, false};
  }
  static KernelSpec social(std::shared_ptr<const SocialNetwork> net) { return {kernel::Social{std::move(net)}, true}; }

  bool is_social() const noexcept { return std::holds_alternative<kernel::Social>(kind); }

  void validate() const {
    std::visit(
        [](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, kernel::InertialMatern> || std::is_same_v<K, kernel::Gaussian> ||
                        std::is_same_v<K, kernel::Stream>) {
            if (!(k.range > 0.0) || !std::isfinite(k.range))
              throw std::invalid_argument("kernel range must be positive and finite");
          } else if constexpr (std::is_same_v<K, kernel::IntegratedWiener>) {
            if (k.order < 2) throw std::invalid_argument("integrated Wiener order must be >= 2");
          } else if constexpr (std::is_same_v<K, kernel::Social>) {
            if (!k.network) throw std::invalid_argument("social kernel requires a network");
          }
        },
        kind);
  }
};

/// Value of a single-individual (time-only) kernel at output time t and source time τ.
inline double eval_kernel(const KernelSpec& spec, double t, double tau) {
  if (!std::isfinite(t) || !std::isfinite(tau)) throw std::invalid_argument("eval_kernel: non-finite time");
  return std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, kernel::Brownian>) {
          return tau <= t ? 1.0 : 0.0;
        } else if constexpr (std::is_same_v<K, kernel::InertialMatern>) {
          return matern1_correlation((t - tau) / k.range);
        } else if constexpr (std::is_same_v<K, kernel::Gaussian>) {
          const double u = (tau - t) / k.range;
          return std::exp(-u * u);
        } else if constexpr (std::is_same_v<K, kernel::Stream>) {
          const double lag = tau - t;
          return (lag > -k.range && lag <= 0.0) ? 1.0 + lag / k.range : 0.0;
        } else if constexpr (std::is_same_v<K, kernel::IntegratedWiener>) {
          if (k.as_printed) return (t - tau) / static_cast<double>(k.order - 1);
          if (tau > t) return 0.0;
          return std::pow(t - tau, k.order - 1) / std::tgamma(static_cast<double>(k.order));
        } else {
          throw std::invalid_argument("eval_kernel: social kernel needs individual indices");
        }
      },
      spec.kind);
}

/// Kernel value between (individual i, time t) and (individual j, time τ).
/// Time kernels act within an individual; the social kernel acts within a knot.
inline double eval_kernel(const KernelSpec& spec, double t, double tau, std::size_t i, std::size_t j) {
  if (const auto* s = std::get_if<kernel::Social>(&spec.kind)) {
    const auto& grid = s->network->grid();
    const std::size_t k = grid.find_knot(t);
    if (k == grid.size()) throw std::invalid_argument("social kernel: time is not a grid knot");
    if (std::abs(t - tau) > 1e-12 * std::max(1.0, std::abs(t))) return 0.0;
    const Eigen::MatrixXd& w = s->network->at(k);
    return w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) / w.row(static_cast<Eigen::Index>(i)).sum();
  }
  return i == j ? eval_kernel(spec, t, tau) : 0.0;
}

/// Row or column label of a kernel matrix.
struct Node {
  std::size_t individual = 0;
  double time = 0.0;
  friend bool operator==(const Node&, const Node&) = default;
};

/// Individual-major stacking: all times of individual 0, then individual 1, ...
inline std::vector<Node> stacked_nodes(const std::vector<double>& times, std::size_t p) {
  std::vector<Node> nodes;
  nodes.reserve(times.size() * p);
  for (std::size_t i = 0; i < p; ++i)
    for (double t : times) nodes.push_back({i, t});
  return nodes;
}

/// A discretized smoother mapping values at `cols` to values at `rows`.
struct KernelMatrix {
  Eigen::MatrixXd values;
  std::vector<Node> rows;
  std::vector<Node> cols;
  std::size_t individuals = 1;

  Eigen::Index output_size() const { return values.rows(); }
  Eigen::Index source_size() const { return values.cols(); }
};

/// Discretize a kernel onto arbitrary (individual, time) output nodes against the grid.
inline KernelMatrix discretize_nodes(const KernelSpec& spec, const std::vector<Node>& targets, const TimeGrid& grid,
                                     std::size_t p) {
  spec.validate();
  if (targets.empty()) throw std::invalid_argument("discretize: empty targets");
  if (p == 0) throw std::invalid_argument("discretize: need at least one individual");
  const std::size_t m = grid.size();
  KernelMatrix out;
  out.individuals = p;
  out.rows = targets;
  out.cols = stacked_nodes(grid.knots(), p);
  out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(targets.size()), static_cast<Eigen::Index>(p * m));

  for (std::size_t r = 0; r < targets.size(); ++r) {
    const Node& node = targets[r];
    if (node.individual >= p) throw std::invalid_argument("discretize: individual index out of range");
    if (!grid.contains(node.time)) throw std::invalid_argument("discretize: target outside the grid span");
    const auto row = static_cast<Eigen::Index>(r);
    if (const auto* s = std::get_if<kernel::Social>(&spec.kind)) {
      if (s->network->individuals() != p) throw std::invalid_argument("discretize: network size mismatch");
      const std::size_t k = grid.find_knot(node.time);
      if (k == m) throw std::invalid_argument("discretize: social kernel targets must be grid knots");
      const Eigen::MatrixXd& w = s->network->at(k);
      const auto i = static_cast<Eigen::Index>(node.individual);
      const double total = w.row(i).sum();
      for (std::size_t j = 0; j < p; ++j)
        out.values(row, static_cast<Eigen::Index>(j * m + k)) = w(i, static_cast<Eigen::Index>(j)) / total;
      continue;
    }
    const std::size_t offset = node.individual * m;
    double total = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double v = eval_kernel(spec, node.time, grid[k]);
      out.values(row, static_cast<Eigen::Index>(offset + k)) = v;
      total += v;
    }
    if (spec.normalize_rows) {
      if (total == 0.0 || !std::isfinite(total))
        throw DegenerateKernelError("discretize: zero row under normalization at t = " + std::to_string(node.time));
      out.values.block(row, static_cast<Eigen::Index>(offset), 1, static_cast<Eigen::Index>(m)) /= total;
    }
  }
  return out;
}

/// Discretize for the same target times for every individual (individual-major rows).
inline KernelMatrix discretize(const KernelSpec& spec, const std::vector<double>& targets, const TimeGrid& grid,
                               std::size_t p) {
  if (targets.empty()) throw std::invalid_argument("discretize: empty targets");
  return discretize_nodes(spec, stacked_nodes(targets, p), grid, p);
}

namespace detail {
inline bool same_nodes(const std::vector<Node>& a, const std::vector<Node>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].individual != b[k].individual) return false;
    if (std::abs(a[k].time - b[k].time) > 1e-12 * std::max(1.0, std::abs(a[k].time))) return false;
  }
  return true;
}
}  // namespace detail

/// Effective smoother of a chain given innermost stage first: H_L ... H_2 H_1.
inline KernelMatrix compose(const std::vector<KernelMatrix>& chain) {
  if (chain.empty()) throw std::invalid_argument("compose: empty chain");
  KernelMatrix out = chain.front();
  for (std::size_t k = 1; k < chain.size(); ++k) {
    const KernelMatrix& outer = chain[k];
    if (outer.source_size() != out.output_size())
      throw CompositionError(k - 1, k,
                             "dimension mismatch (" + std::to_string(outer.source_size()) + " sources vs " +
                                 std::to_string(out.output_size()) + " outputs)");
    if (!detail::same_nodes(outer.cols, out.rows))
      throw CompositionError(k - 1, k, "source nodes do not match previous stage outputs");
    out.values = outer.values * out.values;
    out.rows = outer.rows;
    out.individuals = outer.individuals;
  }
  return out;
}

/// Diagonal white-noise covariance on the grid: sigma0_sq at the initial knot of each individual, 1 elsewhere.
struct NoiseSpec {
  TimeGrid grid;
  double sigma0_sq = 1.0;

  Eigen::VectorXd diagonal(const std::vector<Node>& nodes) const {
    Eigen::VectorXd d(static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t k = 0; k < nodes.size(); ++k)
      d(static_cast<Eigen::Index>(k)) = nodes[k].time == grid.start() ? sigma0_sq : 1.0;
    return d;
  }
};

/// Δτ H D Hᵀ, the covariance of H applied to the discretized noise.
inline Eigen::MatrixXd pcc_covariance(const KernelMatrix& h, const NoiseSpec& noise) {
  const std::vector<Node> expected = stacked_nodes(noise.grid.knots(), h.individuals);
  if (!detail::same_nodes(h.cols, expected))
    throw std::invalid_argument("pcc_covariance: kernel sources are not the noise grid knots");
  const Eigen::VectorXd d = noise.diagonal(h.cols);
  const Eigen::MatrixXd scaled = h.values * d.cwiseSqrt().asDiagonal();
  Eigen::MatrixXd cov = noise.grid.step() * (scaled * scaled.transpose());
  cov = 0.5 * (cov + cov.transpose()).eval();
  return cov;
}

}  // namespace pcc

#endif  // PCC_KERNELS_HPP
