// Shared fixtures for the unit tests: an operator zoo and random generators.
#pragma once

#include "mmfitz/operators.hpp"
#include "mmfitz/paths.hpp"

#include <algorithm>
#include <random>
#include <string>
#include <vector>

namespace mmfitz::testing {

struct NamedOperator {
  std::string name;
  OperatorSpec op;
};

inline std::vector<NamedOperator> operator_zoo() {
  Mat nonsym(2, 2);
  nonsym << 2.0, 1.0, -1.0, 1.0;
  Mat skew(2, 2);
  skew << 0.0, 1.0, -1.0, 0.0;
  Mat general(2, 2);
  general << 1.0, 0.5, -0.5, 2.0;
  return {
      {"box", OperatorSpec::normal_cone_box(Vec::Zero(2), Vec::Ones(2))},
      {"half_line", OperatorSpec::half_line(1)},
      {"mixed_box", OperatorSpec::normal_cone_box(Vec::Constant(2, -kInf), (Vec(2) << 1.0, kInf).finished())},
      {"ball", OperatorSpec::normal_cone_ball((Vec(2) << 0.5, -0.5).finished(), 1.5)},
      {"abs_sum", OperatorSpec::abs_sum((Vec(2) << 1.0, 0.5).finished())},
      {"interval", OperatorSpec::indicator_interval(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0))},
      {"linear_pd", OperatorSpec::linear(nonsym)},
      {"linear_skew", OperatorSpec::linear(skew)},
      {"scaled_identity", OperatorSpec::scaled_identity(1.0, 2)},
      {"zero_operator", OperatorSpec::scaled_identity(0.0, 1)},
      {"sum_identity_box", OperatorSpec::sum(LinearMonotone{Mat::Identity(2, 2) * 0.5},
                                             NormalConeBox{Vec::Zero(2), Vec::Ones(2)})},
      {"sum_general_abs", OperatorSpec::sum(LinearMonotone{general}, SubdiffAbsSum{Vec::Ones(2)})},
  };
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  Vec uniform_vec(Eigen::Index n, double lo, double hi) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

inline SamplingBox cube(Eigen::Index dim, double half_width) {
  return SamplingBox{Vec::Constant(dim, -half_width), Vec::Constant(dim, half_width)};
}

/// Piecewise-linear driver with m(0) = 0 through `pieces` random knots of size <= scale.
inline GridPath random_driver(const TimeGrid& grid, Eigen::Index dim, int pieces, double scale, Rng& rng) {
  const double horizon = grid.horizon();
  Mat knots(dim, pieces + 1);
  knots.col(0).setZero();
  for (int j = 1; j <= pieces; ++j) knots.col(j) = rng.uniform_vec(dim, -scale, scale);
  Mat v(dim, static_cast<Eigen::Index>(grid.nodes()));
  for (std::size_t i = 0; i < grid.nodes(); ++i) {
    const double s = grid.times()[i] / horizon * pieces;
    const int j = std::min(static_cast<int>(s), pieces - 1);
    const double w = s - j;
    v.col(static_cast<Eigen::Index>(i)) = (1.0 - w) * knots.col(j) + w * knots.col(j + 1);
  }
  return GridPath(grid, std::move(v));
}

}  // namespace mmfitz::testing
