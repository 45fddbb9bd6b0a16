#include "mmfitz/backward_tree.hpp"

#include "mmfitz/variational.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace mmfitz {

BinomialTree::BinomialTree(std::size_t depth, double horizon) : depth_(depth), horizon_(horizon) {
  require(depth_ > 0, "BinomialTree: depth must be positive");
  require(horizon_ > 0.0 && std::isfinite(horizon_), "BinomialTree: horizon must be positive");
}

double BinomialTree::walk(std::size_t level, std::size_t node) const {
  return (2.0 * static_cast<double>(node) - static_cast<double>(level)) * sqrt_dt();
}

double BinomialTree::probability(std::size_t level, std::size_t node) const {
  const double n = static_cast<double>(level);
  const double k = static_cast<double>(node);
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
}

TreeProcess::TreeProcess(Eigen::Index dim, std::size_t levels) : dim_(dim) {
  data_.reserve(levels);
  for (std::size_t i = 0; i < levels; ++i) data_.push_back(Mat::Zero(dim, static_cast<Eigen::Index>(i + 1)));
}

Vec TreeProcess::conditional_mean(std::size_t i, std::size_t j) const {
  return 0.5 * (at(i + 1, j + 1) + at(i + 1, j));
}

Vec TreeProcess::martingale_difference(const BinomialTree& tree, std::size_t i, std::size_t j) const {
  return (at(i + 1, j + 1) - at(i + 1, j)) / (2.0 * tree.sqrt_dt());
}

double TreeProcess::expect(const BinomialTree& tree, std::size_t i, const std::function<double(const Vec&)>& f) const {
  std::vector<double> terms(i + 1);
  for (std::size_t j = 0; j <= i; ++j) terms[j] = tree.probability(i, j) * f(at(i, j));
  return pairwise_sum(terms);
}

Mat leaf_values(const BinomialTree& tree, const LeafMap& leaf) {
  require(static_cast<bool>(leaf), "leaf_values: leaf map must be set");
  const std::size_t n = tree.depth();
  const Vec first = leaf(0, tree.walk(n, 0));
  Mat out(first.size(), static_cast<Eigen::Index>(n + 1));
  out.col(0) = first;
  for (std::size_t j = 1; j <= n; ++j) {
    const Vec v = leaf(j, tree.walk(n, j));
    require(v.size() == first.size(), "leaf_values: inconsistent leaf dimension");
    out.col(static_cast<Eigen::Index>(j)) = v;
  }
  return out;
}

BackwardDriver zero_driver() {
  return [](double, const Vec& y, const Vec&) { return Vec::Zero(y.size()); };
}

namespace {

double node_gap(const OperatorSpec& phi, const Vec& y, const Vec& h) {
  const auto value = fitzpatrick_closed_form(phi, y, h);
  if (!value) return std::numeric_limits<double>::quiet_NaN();
  return std::isfinite(*value) ? *value - y.dot(h) : kInf;
}

BsviSolution initialize(const OperatorSpec& phi, const LeafMap& xi, const BinomialTree& tree) {
  const std::size_t n = tree.depth();
  const Mat leaves = leaf_values(tree, xi);
  require(leaves.rows() == phi.dim(), "solve_bsvi_tree: terminal value has wrong dimension");
  BsviSolution sol{tree,
                   TreeProcess(phi.dim(), n + 1),
                   TreeProcess(phi.dim(), n),
                   TreeProcess(phi.dim(), n),
                   TreeProcess(phi.dim(), n),
                   TreeProcess(1, n),
                   0.0,
                   0.0,
                   0.0};
  for (std::size_t j = 0; j <= n; ++j) {
    const Vec v = leaves.col(static_cast<Eigen::Index>(j));
    require(phi.domain_distance(v) <= 1e-9, "solve_bsvi_tree: terminal value outside cl Dom(phi) at leaf " +
                                                std::to_string(j));
    sol.Y.set(n, j, v);
  }
  return sol;
}

void finalize(const OperatorSpec& phi, BsviSolution& sol) {
  const BinomialTree& tree = sol.tree;
  const double dt = tree.dt();
  for (std::size_t i = 0; i < tree.depth(); ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const Vec y = sol.Y.at(i, j);
      const Vec h = sol.H.at(i, j);
      const double g = node_gap(phi, y, h);
      sol.gap.set(i, j, Vec::Constant(1, g));
      if (!std::isnan(g)) sol.max_gap = std::max(sol.max_gap, g);
      const Vec defect = y - sol.Y.conditional_mean(i, j) - dt * sol.drift.at(i, j) + dt * h;
      sol.max_node_defect = std::max(sol.max_node_defect, defect.norm());
    }
  }
}

// Backward sweep shared by the implicit and penalized schemes; step(E[Y_{i+1}], E[Y_{i+1}] + dt F) is
// the next fixed-point iterate for y.
template <class Step>
void sweep(BsviSolution& sol, const BackwardDriver& F, const BsviOptions& options, Step&& step) {
  const BinomialTree& tree = sol.tree;
  const double dt = tree.dt();
  for (std::size_t level = tree.depth(); level-- > 0;) {
    const double t = tree.time(level);
    for (std::size_t j = 0; j <= level; ++j) {
      const Vec e = sol.Y.conditional_mean(level, j);
      const Vec z = sol.Y.martingale_difference(tree, level, j);
      Vec y = step(e, e + dt * F(t, e, z));
      double change = kInf;
      // A finite change is required: once |y| overflows the relative test alone would pass.
      const auto settled = [&] {
        return std::isfinite(change) && change <= options.fixed_point_tolerance * (1.0 + y.stableNorm());
      };
      for (int it = 0; it < options.max_fixed_point_iterations; ++it) {
        const Vec next = step(e, e + dt * F(t, y, z));
        change = (next - y).norm();
        y = next;
        if (settled() || !std::isfinite(change)) break;
      }
      if (!settled()) {
        throw ConvergenceError("solve_bsvi_tree: fixed point diverged at node (" + std::to_string(level) + ", " +
                                   std::to_string(j) + ")",
                               change);
      }
      const Vec f = F(t, y, z);
      require(f.allFinite(), "solve_bsvi_tree: non-finite driver value");
      sol.Y.set(level, j, y);
      sol.Z.set(level, j, z);
      sol.drift.set(level, j, f);
      sol.H.set(level, j, (e + dt * f - y) / dt);
    }
  }
}

}  // namespace

BsviSolution solve_bsvi_tree(const OperatorSpec& phi, const BackwardDriver& F, const LeafMap& xi,
                             const BinomialTree& tree, const BsviOptions& options) {
  require(phi.is_subdifferential(), "solve_bsvi_tree: operator must be a subdifferential kind");
  require(static_cast<bool>(F), "solve_bsvi_tree: driver must be set");
  BsviSolution sol = initialize(phi, xi, tree);
  const double dt = tree.dt();
  sweep(sol, F, options, [&](const Vec&, const Vec& shifted) {
    return resolvent(phi, dt, shifted, options.resolvent);
  });
  finalize(phi, sol);
  return sol;
}

BsviSolution solve_bsvi_tree_penalized(const OperatorSpec& phi, const BackwardDriver& F, const LeafMap& xi,
                                       const BinomialTree& tree, double eps, const BsviOptions& options) {
  require(phi.is_subdifferential(), "solve_bsvi_tree_penalized: operator must be a subdifferential kind");
  require(static_cast<bool>(F), "solve_bsvi_tree_penalized: driver must be set");
  require(eps > 0.0 && tree.dt() <= eps * (1.0 + 1e-12), "solve_bsvi_tree_penalized: explicit scheme needs dt <= eps");
  BsviSolution sol = initialize(phi, xi, tree);
  const double dt = tree.dt();
  sweep(sol, F, options, [&](const Vec& e, const Vec& shifted) {
    return Vec(shifted - dt * yosida(phi, eps, e, options.resolvent).ax);
  });
  finalize(phi, sol);
  return sol;
}

MartingaleRepresentation martingale_representation(const BinomialTree& tree, const Mat& eta) {
  const std::size_t n = tree.depth();
  require(eta.cols() == static_cast<Eigen::Index>(n + 1), "martingale_representation: need one value per leaf");
  MartingaleRepresentation rep{Vec(), TreeProcess(eta.rows(), n + 1), TreeProcess(eta.rows(), n)};
  rep.Y.level(n) = eta;
  for (std::size_t level = n; level-- > 0;) {
    for (std::size_t j = 0; j <= level; ++j) {
      rep.Y.set(level, j, rep.Y.conditional_mean(level, j));
      rep.Z.set(level, j, rep.Y.martingale_difference(tree, level, j));
    }
  }
  rep.y0 = rep.Y.at(0, 0);
  return rep;
}

double reconstruction_defect(const BinomialTree& tree, const Mat& eta, const MartingaleRepresentation& rep) {
  const std::size_t n = tree.depth();
  require(n <= 20, "reconstruction_defect: depth must be at most 20");
  const double s = tree.sqrt_dt();
  double worst = 0.0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    Vec value = rep.y0;
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool up = (mask >> i) & 1U;
      value += rep.Z.at(i, j) * (up ? s : -s);
      if (up) ++j;
    }
    worst = std::max(worst, (eta.col(static_cast<Eigen::Index>(j)) - value).norm());
  }
  return worst;
}

std::vector<double> level_energy_defects(const BsviSolution& sol) {
  const BinomialTree& tree = sol.tree;
  const double dt = tree.dt();
  std::vector<double> out(tree.depth());
  auto sq = [](const Vec& v) { return v.squaredNorm(); };
  for (std::size_t i = 0; i < tree.depth(); ++i) {
    std::vector<double> shifted(i + 1);
    for (std::size_t j = 0; j <= i; ++j) {
      const Vec v = sol.Y.at(i, j) + dt * (sol.H.at(i, j) - sol.drift.at(i, j));
      shifted[j] = tree.probability(i, j) * v.squaredNorm();
    }
    out[i] = sol.Y.expect(tree, i + 1, sq) - pairwise_sum(shifted) - dt * sol.Z.expect(tree, i, sq);
  }
  return out;
}

OperatorSpec shifted_operator(const OperatorSpec& phi, double decay) {
  require(decay >= 0.0 && std::isfinite(decay), "shifted_operator: decay must be nonnegative");
  require(phi.is_subdifferential(), "shifted_operator: operator must be a subdifferential kind");
  if (decay == 0.0) return phi;
  const Mat shift = decay * Mat::Identity(phi.dim(), phi.dim());
  return std::visit(
      [&](const auto& k) -> OperatorSpec {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, ScaledIdentity>) {
          return OperatorSpec::scaled_identity(k.c + decay, k.dim);
        } else if constexpr (std::is_same_v<K, LinearMonotone>) {
          return OperatorSpec::linear(k.matrix + shift);
        } else if constexpr (std::is_same_v<K, SumOperator>) {
          return OperatorSpec::sum(LinearMonotone{k.linear.matrix + shift}, k.part);
        } else {
          return OperatorSpec::sum(LinearMonotone{shift}, SubdiffPart(k));
        }
      },
      phi.kind());
}

namespace {

struct BruteState {
  std::vector<Mat> y;  // levels 0..n, dim x (i + 1)
};

bool bounded_domain(const OperatorSpec& phi) {
  if (std::holds_alternative<NormalConeBall>(phi.kind())) return true;
  if (const auto* b = std::get_if<NormalConeBox>(&phi.kind())) return b->lo.allFinite() && b->hi.allFinite();
  if (const auto* s = std::get_if<SubdiffIndicatorInterval>(&phi.kind())) return s->a.allFinite() && s->b.allFinite();
  return false;
}

// Term p dt [H_A(y, h) - <y, h>] of node (i, j), h = (E[Y_{i+1}] - y) / dt, with its subgradient in
// y (g_self) and in each child value (g_child, shared by both children).
struct NodeTerm {
  double value = kInf;
  Vec g_self;
  Vec g_child;
};

NodeTerm node_term(const OperatorSpec& a, const BinomialTree& tree, const BruteState& s, std::size_t i, std::size_t j) {
  const auto c = static_cast<Eigen::Index>(j);
  const double p = tree.probability(i, j);
  const double dt = tree.dt();
  const Vec y = s.y[i].col(c);
  const Vec h = (0.5 * (s.y[i + 1].col(c + 1) + s.y[i + 1].col(c)) - y) / dt;
  const auto value = fitzpatrick_closed_form(a, y, h);
  const auto arg = fitzpatrick_maximizer(a, y, h);
  NodeTerm t;
  if (!value || !arg || !std::isfinite(*value)) return t;
  t.value = p * dt * std::max(*value - y.dot(h), 0.0);
  // (u*, u) is a subgradient of H at (y, h); chain rule through h.
  const Vec dy = arg->ustar - h;
  const Vec dh = arg->u - y;
  t.g_self = p * (dt * dy - dh);
  t.g_child = 0.5 * p * dh;
  return t;
}

// 1/2 E|eta - xi|^2 + 1/2 (E|eta|^2 - E|xi|^2) + sqrt(R) |eta - xi|_{L2} and its gradient in the leaves.
double terminal_term(const BinomialTree& tree, const Mat& xi, double radius, const Mat& eta, Mat* grad) {
  const std::size_t n = tree.depth();
  std::vector<double> terms;
  double dist_sq = 0.0;
  if (grad != nullptr) grad->setZero(eta.rows(), eta.cols());
  for (std::size_t j = 0; j <= n; ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    const double p = tree.probability(n, j);
    const Vec d = eta.col(c) - xi.col(c);
    terms.push_back(p * (0.5 * d.squaredNorm() + 0.5 * eta.col(c).squaredNorm() - 0.5 * xi.col(c).squaredNorm()));
    dist_sq += p * d.squaredNorm();
    if (grad != nullptr) grad->col(c) = p * (d + eta.col(c));
  }
  const double dist = std::sqrt(dist_sq);
  terms.push_back(std::sqrt(radius) * dist);
  if (grad != nullptr && dist > 0.0) {
    for (std::size_t j = 0; j <= n; ++j) {
      const auto c = static_cast<Eigen::Index>(j);
      grad->col(c) += std::sqrt(radius) * tree.probability(n, j) * (eta.col(c) - xi.col(c)) / dist;
    }
  }
  return pairwise_sum(terms);
}

double objective(const OperatorSpec& a, const BinomialTree& tree, const Mat& xi, double radius, const BruteState& s) {
  std::vector<double> terms{terminal_term(tree, xi, radius, s.y[tree.depth()], nullptr)};
  for (std::size_t i = 0; i < tree.depth(); ++i) {
    for (std::size_t j = 0; j <= i; ++j) terms.push_back(node_term(a, tree, s, i, j).value);
  }
  return pairwise_sum(terms);
}

}  // namespace

BruteForceResult brute_force_bsvi(const OperatorSpec& phi, double decay, const LeafMap& xi, const BinomialTree& tree,
                                  const BruteForceOptions& options) {
  require(bounded_domain(phi), "brute_force_bsvi: requires a bounded box, interval or ball domain");
  const std::size_t n = tree.depth();
  const Mat leaves = leaf_values(tree, xi);
  require(leaves.rows() == phi.dim(), "brute_force_bsvi: terminal value has wrong dimension");
  const Eigen::Index dim = phi.dim();
  require(static_cast<std::size_t>(dim) * (n + 1) * (n + 2) / 2 <= 200,
          "brute_force_bsvi: program exceeds 200 variables");
  const OperatorSpec a = shifted_operator(phi, decay);

  double xi_energy = 0.0;
  for (std::size_t j = 0; j <= n; ++j) xi_energy += tree.probability(n, j) * leaves.col(static_cast<Eigen::Index>(j)).squaredNorm();
  // A radius strictly above E|xi|^2 keeps the terminal term sharp at eta = xi.
  const double radius = options.radius > 0.0 ? options.radius : 4.0 * std::max(xi_energy, 1.0);
  require(xi_energy <= radius * (1.0 + 1e-12), "brute_force_bsvi: E|xi|^2 exceeds the radius");

  auto project_node = [&](BruteState& s, std::size_t i, Eigen::Index c) {
    if (i < n) s.y[i].col(c) = resolvent(phi, 1.0, s.y[i].col(c));
  };

  BruteState state;
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t i = 0; i <= n; ++i) {
    Mat level(dim, static_cast<Eigen::Index>(i + 1));
    for (Eigen::Index c = 0; c < level.cols(); ++c) {
      for (Eigen::Index r = 0; r < dim; ++r) {
        level(r, c) = options.random_start ? 2.0 * unit(rng) : 0.0;
        if (i == n) level(r, c) += leaves(r, c);
      }
    }
    state.y.push_back(level);
    for (Eigen::Index c = 0; c < level.cols(); ++c) project_node(state, i, c);
  }

  // Every term is nonnegative and all vanish at the minimizer, so the program is the convex
  // feasibility problem {each term <= 0}; each sweep applies the Polyak step f_k / |g_k|^2
  // to one term at a time, terminal term first, then the nodes from the leaves back to the root.
  BruteForceResult out;
  BruteState best = state;
  double f = objective(a, tree, leaves, radius, state);
  out.objective = f;
  out.trace.push_back(f);
  Mat terminal_grad;
  for (std::size_t it = 0; it < options.max_iterations && out.objective > options.target; ++it) {
    const double ft = terminal_term(tree, leaves, radius, state.y[n], &terminal_grad);
    const double gt = terminal_grad.squaredNorm();
    if (ft > 0.0 && gt > 0.0) state.y[n] -= (ft / gt) * terminal_grad;
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t j = 0; j <= i; ++j) {
        const NodeTerm t = node_term(a, tree, state, i, j);
        const double g2 = t.g_self.squaredNorm() + 2.0 * t.g_child.squaredNorm();
        if (!(t.value > 0.0) || !(g2 > 0.0) || !std::isfinite(t.value)) continue;
        const double step = t.value / g2;
        const auto c = static_cast<Eigen::Index>(j);
        state.y[i].col(c) -= step * t.g_self;
        state.y[i + 1].col(c) -= step * t.g_child;
        state.y[i + 1].col(c + 1) -= step * t.g_child;
        project_node(state, i, c);
        project_node(state, i + 1, c);
        project_node(state, i + 1, c + 1);
      }
    }
    f = objective(a, tree, leaves, radius, state);
    if (f < out.objective) {
      out.objective = f;
      best = state;
    }
    out.trace.push_back(out.objective);
  }

  // Rebuild the solution from the best node values; H is the dphi part of the A-increment.
  BsviSolution sol{tree,
                   TreeProcess(dim, n + 1),
                   TreeProcess(dim, n),
                   TreeProcess(dim, n),
                   TreeProcess(dim, n),
                   TreeProcess(1, n),
                   0.0,
                   0.0,
                   0.0};
  for (std::size_t i = 0; i <= n; ++i) sol.Y.level(i) = best.y[i];
  const double dt = tree.dt();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const Vec y = sol.Y.at(i, j);
      const Vec f_node = -decay * y;
      sol.Z.set(i, j, sol.Y.martingale_difference(tree, i, j));
      sol.drift.set(i, j, f_node);
      sol.H.set(i, j, (sol.Y.conditional_mean(i, j) + dt * f_node - y) / dt);
    }
  }
  for (std::size_t j = 0; j <= n; ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    sol.terminal_defect = std::max(sol.terminal_defect, (sol.Y.level(n).col(c) - leaves.col(c)).norm());
  }
  finalize(phi, sol);
  TreeProcess h_a(dim, n);
  for (std::size_t i = 0; i < n; ++i) h_a.level(i) = sol.H.level(i) + decay * sol.Y.level(i);
  out.objective = bsde_jhat(a, tree, leaves, radius, tree_candidate(tree, sol.Y.level(n), h_a)).total;
  out.converged = out.objective <= 1e-6;
  out.solution = std::move(sol);
  return out;
}

}  // namespace mmfitz
