// Backward stochastic variational inequalities on a recombining binomial tree, where
// conditional expectations are exact two-point averages.
#pragma once

#include "mmfitz/fitzpatrick.hpp"
#include "mmfitz/operators.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace mmfitz {

/// Depth n, dt = T / n, increments +-sqrt(dt) with probability 1/2. Node (i, j) has j up-moves.
class BinomialTree {
 public:
  BinomialTree() = default;
  BinomialTree(std::size_t depth, double horizon);

  std::size_t depth() const noexcept { return depth_; }
  double horizon() const noexcept { return horizon_; }
  double dt() const noexcept { return horizon_ / static_cast<double>(depth_); }
  double sqrt_dt() const { return std::sqrt(dt()); }
  double time(std::size_t level) const { return dt() * static_cast<double>(level); }
  /// Walk value B at node (i, j): (2j - i) sqrt(dt).
  double walk(std::size_t level, std::size_t node) const;
  /// C(i, j) / 2^i.
  double probability(std::size_t level, std::size_t node) const;

 private:
  std::size_t depth_ = 1;
  double horizon_ = 1.0;
};

/// Vector value per node for levels 0..levels-1; level i holds a dim x (i + 1) matrix.
class TreeProcess {
 public:
  TreeProcess() = default;
  TreeProcess(Eigen::Index dim, std::size_t levels);

  Eigen::Index dim() const noexcept { return dim_; }
  std::size_t levels() const noexcept { return data_.size(); }
  Mat& level(std::size_t i) { return data_[i]; }
  const Mat& level(std::size_t i) const { return data_[i]; }
  Vec at(std::size_t i, std::size_t j) const { return data_[i].col(static_cast<Eigen::Index>(j)); }
  void set(std::size_t i, std::size_t j, const Vec& v) { data_[i].col(static_cast<Eigen::Index>(j)) = v; }

  /// E[value at level i + 1 | node (i, j)].
  Vec conditional_mean(std::size_t i, std::size_t j) const;
  /// (value(i+1, j+1) - value(i+1, j)) / (2 sqrt(dt)).
  Vec martingale_difference(const BinomialTree& tree, std::size_t i, std::size_t j) const;
  /// Exact expectation of f over level i.
  double expect(const BinomialTree& tree, std::size_t i, const std::function<double(const Vec&)>& f) const;

 private:
  Eigen::Index dim_ = 0;
  std::vector<Mat> data_;
};

/// Leaf payoff: (leaf index j, terminal walk value) -> vector.
using LeafMap = std::function<Vec(std::size_t j, double w)>;
/// BSVI driver F(t, y, z).
using BackwardDriver = std::function<Vec(double t, const Vec& y, const Vec& z)>;

/// dim x (depth + 1) matrix of leaf values.
Mat leaf_values(const BinomialTree& tree, const LeafMap& leaf);
BackwardDriver zero_driver();

struct BsviOptions {
  ResolventOptions resolvent;
  double fixed_point_tolerance = 1e-12;
  int max_fixed_point_iterations = 1000;
};

struct BsviSolution {
  BinomialTree tree;
  TreeProcess Y;       ///< levels 0..n
  TreeProcess Z;       ///< levels 0..n-1
  TreeProcess H;       ///< levels 0..n-1, H_i in dphi(Y_i)
  TreeProcess drift;   ///< F(t_i, Y_i, Z_i), levels 0..n-1
  TreeProcess gap;     ///< per-node Fitzpatrick gap of (Y_i, H_i), dim 1
  double terminal_defect = 0.0;  ///< max |Y_n - xi|
  double max_gap = 0.0;
  double max_node_defect = 0.0;  ///< max |Y_i - E[Y_{i+1}] - dt F_i + dt H_i|
};

/// Per node: Z from level i+1, y = J_dt(E[Y_{i+1}] + dt F(t_i, y, Z_i)) by fixed point,
/// H = (E[Y_{i+1}] + dt F - y) / dt. Throws ConvergenceError naming the node on divergence.
BsviSolution solve_bsvi_tree(const OperatorSpec& phi, const BackwardDriver& F, const LeafMap& xi,
                             const BinomialTree& tree, const BsviOptions& options = {});

/// Explicit penalization: y = E[Y_{i+1}] + dt F(t_i, y, Z_i) - dt A_eps(E[Y_{i+1}]). Requires dt <= eps.
BsviSolution solve_bsvi_tree_penalized(const OperatorSpec& phi, const BackwardDriver& F, const LeafMap& xi,
                                       const BinomialTree& tree, double eps, const BsviOptions& options = {});

struct MartingaleRepresentation {
  Vec y0;
  TreeProcess Y;  ///< Y_i = E[eta | node], levels 0..n
  TreeProcess Z;  ///< levels 0..n-1
};

MartingaleRepresentation martingale_representation(const BinomialTree& tree, const Mat& eta);

/// max over all 2^n paths of |eta(leaf) - Y_0 - sum_i Z_i dB_i|. Requires depth <= 20.
double reconstruction_defect(const BinomialTree& tree, const Mat& eta, const MartingaleRepresentation& rep);

/// Per level i: E|Y_{i+1}|^2 - E|Y_i + dt (H_i - F_i)|^2 - dt E|Z_i|^2, exactly 0 for the scheme.
std::vector<double> level_energy_defects(const BsviSolution& sol);

struct BruteForceOptions {
  std::size_t max_iterations = 200'000;
  double target = 1e-9;
  /// Radius bound R of the terminal ball; defaults to 4 max(E|xi|^2, 1).
  double radius = 0.0;
  std::uint64_t seed = 0;
  /// Start from a random feasible point instead of eta = xi projections.
  bool random_start = true;
};

struct BruteForceResult {
  BsviSolution solution;
  double objective = kInf;
  std::vector<double> trace;  ///< running best objective per iteration
  bool converged = false;
};

/// Minimizes the backward functional with A = dphi + c I over tree-adapted (eta, H), where the
/// driver is F(t, y, z) = -c y with c >= 0. Decision variables are the node values of Y.
BruteForceResult brute_force_bsvi(const OperatorSpec& phi, double decay, const LeafMap& xi, const BinomialTree& tree,
                                  const BruteForceOptions& options = {});

/// dphi + c I as a single operator (dphi itself when c = 0).
OperatorSpec shifted_operator(const OperatorSpec& phi, double decay);

}  // namespace mmfitz
