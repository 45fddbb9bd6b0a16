#include "mmfitz/paths.hpp"

#include <algorithm>
#include <cmath>

namespace mmfitz {

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
  require(times_.size() >= 2, "TimeGrid: need at least two nodes");
  require(times_.front() == 0.0, "TimeGrid: grid must start at 0");
  for (std::size_t i = 1; i < times_.size(); ++i) {
    require(std::isfinite(times_[i]) && times_[i] > times_[i - 1], "TimeGrid: times must be strictly increasing");
  }
}

TimeGrid TimeGrid::uniform(double horizon, std::size_t steps) {
  require(steps >= 1 && horizon > 0.0 && std::isfinite(horizon), "TimeGrid::uniform: need T > 0 and N >= 1");
  std::vector<double> t(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) t[i] = horizon * static_cast<double>(i) / static_cast<double>(steps);
  t.back() = horizon;
  return TimeGrid(std::move(t));
}

double TimeGrid::max_dt() const {
  double m = 0.0;
  for (std::size_t i = 0; i < steps(); ++i) m = std::max(m, dt(i));
  return m;
}

GridPath::GridPath(TimeGrid g, Mat v) : grid(std::move(g)), values(std::move(v)) {
  require(static_cast<std::size_t>(values.cols()) == grid.nodes(), "GridPath: values length differs from grid");
  require(values.rows() > 0, "GridPath: dimension must be positive");
}

GridPath GridPath::constant(const TimeGrid& grid, const Vec& value) {
  Mat v(value.size(), static_cast<Eigen::Index>(grid.nodes()));
  v.colwise() = value;
  return GridPath(grid, std::move(v));
}

double GridPath::sup_norm() const { return values.colwise().norm().maxCoeff(); }

double GridPath::modulus(double delta) const {
  const auto& t = grid.times();
  double best = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = i + 1; j < t.size() && t[j] - t[i] <= delta * (1.0 + 1e-12); ++j) {
      best = std::max(best, (values.col(static_cast<Eigen::Index>(j)) - values.col(static_cast<Eigen::Index>(i))).norm());
    }
  }
  return best;
}

BVPath::BVPath(TimeGrid g, Mat inc) : grid(std::move(g)), increments(std::move(inc)) {
  require(static_cast<std::size_t>(increments.cols()) == grid.steps(), "BVPath: increments length differs from grid");
  require(increments.rows() > 0, "BVPath: dimension must be positive");
}

BVPath BVPath::zero(const TimeGrid& grid, Eigen::Index dim) {
  return BVPath(grid, Mat::Zero(dim, static_cast<Eigen::Index>(grid.steps())));
}

BVPath BVPath::from_values(const TimeGrid& grid, const Mat& values) {
  require(static_cast<std::size_t>(values.cols()) == grid.nodes(), "BVPath::from_values: length mismatch");
  require(values.col(0).norm() == 0.0, "BVPath::from_values: k(0) must be 0");
  const Eigen::Index n = static_cast<Eigen::Index>(grid.steps());
  Mat inc(values.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) inc.col(i) = values.col(i + 1) - values.col(i);
  return BVPath(grid, std::move(inc));
}

Mat BVPath::values() const {
  Mat v(dim(), increments.cols() + 1);
  v.col(0).setZero();
  for (Eigen::Index i = 0; i < increments.cols(); ++i) v.col(i + 1) = v.col(i) + increments.col(i);
  return v;
}

Vec BVPath::value_at(std::size_t node) const {
  Vec s = Vec::Zero(dim());
  for (std::size_t i = 0; i < node; ++i) s += increments.col(static_cast<Eigen::Index>(i));
  return s;
}

double BVPath::total_variation() const {
  std::vector<double> norms(static_cast<std::size_t>(increments.cols()));
  for (Eigen::Index i = 0; i < increments.cols(); ++i) norms[static_cast<std::size_t>(i)] = increments.col(i).norm();
  return pairwise_sum(norms);
}

double sup_distance(const GridPath& a, const GridPath& b) {
  require_same_grid(a.grid, b.grid, "sup_distance");
  require(a.dim() == b.dim(), "sup_distance: dimension mismatch");
  return (a.values - b.values).colwise().norm().maxCoeff();
}

void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* what) {
  require(a == b, std::string(what) + ": paths are not on the same grid");
}

}  // namespace mmfitz
