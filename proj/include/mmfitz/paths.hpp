// Time grids, piecewise-linear continuous paths and bounded-variation paths.
#pragma once

#include "mmfitz/core.hpp"

#include <vector>

namespace mmfitz {

/// Strictly increasing times 0 = t_0 < ... < t_N = T.
class TimeGrid {
 public:
  TimeGrid() = default;
  explicit TimeGrid(std::vector<double> times);

  static TimeGrid uniform(double horizon, std::size_t steps);

  const std::vector<double>& times() const noexcept { return times_; }
  std::size_t nodes() const noexcept { return times_.size(); }
  std::size_t steps() const noexcept { return times_.empty() ? 0 : times_.size() - 1; }
  double horizon() const { return times_.back(); }
  double dt(std::size_t step) const { return times_[step + 1] - times_[step]; }
  double max_dt() const;

  bool operator==(const TimeGrid& other) const { return times_ == other.times_; }

 private:
  std::vector<double> times_;
};

/// Continuous path, linear between nodes. values is dim x nodes.
struct GridPath {
  TimeGrid grid;
  Mat values;

  GridPath() = default;
  GridPath(TimeGrid g, Mat v);

  static GridPath constant(const TimeGrid& grid, const Vec& value);
  static GridPath zero(const TimeGrid& grid, Eigen::Index dim) { return constant(grid, Vec::Zero(dim)); }

  Eigen::Index dim() const noexcept { return values.rows(); }
  Vec at(std::size_t node) const { return values.col(static_cast<Eigen::Index>(node)); }
  /// ||x||_T = max over nodes of |x(t_i)|.
  double sup_norm() const;
  /// Grid modulus of continuity: max |x(t_i) - x(t_j)| over |t_i - t_j| <= delta.
  double modulus(double delta) const;
};

/// Bounded-variation path with k(0) = 0, stored by increments (dim x steps).
struct BVPath {
  TimeGrid grid;
  Mat increments;

  BVPath() = default;
  BVPath(TimeGrid g, Mat inc);

  static BVPath zero(const TimeGrid& grid, Eigen::Index dim);
  /// Increments of a path given by node values; the first value must be 0.
  static BVPath from_values(const TimeGrid& grid, const Mat& values);

  Eigen::Index dim() const noexcept { return increments.rows(); }
  Vec increment(std::size_t step) const { return increments.col(static_cast<Eigen::Index>(step)); }
  /// Node values k(t_0) = 0, k(t_1), ..., k(t_N).
  Mat values() const;
  Vec value_at(std::size_t node) const;
  double total_variation() const;
};

double sup_distance(const GridPath& a, const GridPath& b);

/// Throws PreconditionError unless both grids are identical.
void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* what);

}  // namespace mmfitz
