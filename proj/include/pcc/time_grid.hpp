#ifndef PCC_TIME_GRID_HPP
#define PCC_TIME_GRID_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace pcc {

/// Ordered knots covering [start, end]. All convolution integrals are
/// approximated by sums over these knots.
class TimeGrid {
 public:
  TimeGrid() = default;

  /// Arbitrary strictly increasing knots.
  explicit TimeGrid(std::vector<double> knots) : knots_(std::move(knots)) {
    if (knots_.size() < 2) throw std::invalid_argument("TimeGrid: need at least two knots");
    for (std::size_t k = 1; k < knots_.size(); ++k) {
      if (!(knots_[k] > knots_[k - 1]))
        throw std::invalid_argument("TimeGrid: knots must be strictly increasing");
    }
    for (double t : knots_) {
      if (!std::isfinite(t)) throw std::invalid_argument("TimeGrid: non-finite knot");
    }
  }

  /// m equally spaced knots with both endpoints included.
  static TimeGrid uniform(double start, double end, std::size_t m) {
    if (m < 2) throw std::invalid_argument("make_grid: m must be >= 2");
    if (!(end > start) || !std::isfinite(start) || !std::isfinite(end))
      throw std::invalid_argument("make_grid: end must exceed start");
    std::vector<double> knots(m);
    const double step = (end - start) / static_cast<double>(m - 1);
    for (std::size_t k = 0; k < m; ++k) knots[k] = start + step * static_cast<double>(k);
    knots.back() = end;
    TimeGrid g(std::move(knots));
    return g;
  }

  std::size_t size() const noexcept { return knots_.size(); }
  double start() const noexcept { return knots_.front(); }
  double end() const noexcept { return knots_.back(); }
  double operator[](std::size_t k) const { return knots_[k]; }
  const std::vector<double>& knots() const noexcept { return knots_; }

  /// Spacing τ_k − τ_{k−1}, k ≥ 1.
  double spacing(std::size_t k) const { return knots_.at(k) - knots_.at(k - 1); }

  /// Mean spacing; the single Δτ used as the noise scale.
  double step() const noexcept {
    return (end() - start()) / static_cast<double>(size() - 1);
  }

  bool contains(double t) const noexcept { return t >= start() && t <= end(); }

  /// Index of the knot equal to t within tol, or size() if none.
  std::size_t find_knot(double t, double tol = 1e-12) const {
    auto it = std::lower_bound(knots_.begin(), knots_.end(), t - tol);
    if (it != knots_.end() && std::abs(*it - t) <= tol * std::max(1.0, std::abs(t)))
      return static_cast<std::size_t>(it - knots_.begin());
    return size();
  }

  /// Index of the knot nearest to t.
  std::size_t nearest_knot(double t) const {
    auto it = std::lower_bound(knots_.begin(), knots_.end(), t);
    if (it == knots_.begin()) return 0;
    if (it == knots_.end()) return size() - 1;
    const auto hi = static_cast<std::size_t>(it - knots_.begin());
    return (t - knots_[hi - 1] <= knots_[hi] - t) ? hi - 1 : hi;
  }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  std::vector<double> knots_;
};

inline TimeGrid make_grid(double start, double end, std::size_t m) {
  return TimeGrid::uniform(start, end, m);
}

}  // namespace pcc

#endif  // PCC_TIME_GRID_HPP
