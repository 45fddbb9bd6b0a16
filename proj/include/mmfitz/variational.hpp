// Convex functionals whose zeros characterize solutions, evaluated as certified lower
// bounds of their defining suprema over finite probe sets plus closed forms.
//
// Each evaluator checks that the candidate satisfies its linear constraint set (the
// node identity of the equation) and reports named terms; stochastic evaluators add
// standard errors.
#pragma once

#include "mmfitz/backward_tree.hpp"
#include "mmfitz/fitzpatrick.hpp"
#include "mmfitz/forward_sde.hpp"
#include "mmfitz/gsp.hpp"
#include "mmfitz/operators.hpp"
#include "mmfitz/paths.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mmfitz {

struct FunctionalTerm {
  std::string name;
  double value = 0.0;
  double standard_error = 0.0;
};

struct FunctionalReport {
  double total = 0.0;  ///< may be +inf
  double standard_error = 0.0;
  std::vector<FunctionalTerm> terms;
  std::size_t probes_used = 0;
  /// Value of each probe, in evaluation order, for functionals defined by a sup over probes.
  std::vector<double> probe_values;
  bool certified_lower_bound = true;

  /// Value of a named term; throws PreconditionError when absent.
  double term(const std::string& name) const;
};

/// Structured text: one `key = value` line per field and `term.<name> = value, se` per term.
std::string to_text(const FunctionalReport& report);

// ---------------------------------------------------------------------------------------
// Generalized Skorohod problem

struct GspCandidate {
  Vec a;
  GridPath x;
  BVPath k;
  GridPath mu;
};

/// max over nodes of |x_i + k_i - a - mu_i|.
double constraint_defect(const GspCandidate& c);

/// Piecewise-linear modulus table delta -> alpha(delta); constant beyond the last entry.
class ModulusTable {
 public:
  ModulusTable() = default;
  /// Requires deltas increasing from 0, values nondecreasing from 0.
  ModulusTable(std::vector<double> deltas, std::vector<double> values);

  /// Empirical grid modulus of a driver family at every multiple of the (uniform) step.
  static ModulusTable empirical(std::span<const GridPath> family);

  bool empty() const noexcept { return deltas_.empty(); }
  double operator()(double delta) const;
  /// Whether the grid modulus of nu stays below alpha (up to slack) at every table entry.
  bool admits(const GridPath& nu, double slack = 1e-12) const;

 private:
  std::vector<double> deltas_;
  std::vector<double> values_;
};

struct FunctionalParams {
  double R = 1.0;  ///< variation budget
  ModulusTable alpha;
  std::vector<GridPath> probe_nu;
  /// Graph sample used in place of H for kinds without a closed form.
  std::vector<GraphPair> probe_graph;
};

/// R = 2 var(k) of the reference solution, alpha = empirical modulus of the family.
FunctionalParams default_gsp_params(const BVPath& reference_k, std::span<const GridPath> family,
                                    std::vector<GridPath> probe_nu = {});

/// |a - x0|^2 + path gap + 2R |mu - m|_T + max over nu in probe_nu, m, mu of
/// [sum_i <mu_{i+1} - nu_{i+1}, dk_i> - R |nu - m|_T].
FunctionalReport gsp_jhat(const OperatorSpec& op, const Vec& x0, const GridPath& m, const FunctionalParams& params,
                          const GspCandidate& cand);

enum class MinimizeMethod {
  admm,        ///< alternating direction method of multipliers on the increment splitting
  subgradient  ///< projected subgradient descent with the chosen StepRule
};

enum class StepRule {
  diminishing,  ///< c / sqrt(j)
  polyak,       ///< objective / |g|^2, using the known optimal value 0
};

struct MinimizeOptions {
  MinimizeMethod method = MinimizeMethod::admm;
  std::size_t iterations = 20'000;
  double penalty = 1.0;  ///< ADMM penalty rho
  double step = 0.1;
  StepRule rule = StepRule::diminishing;
  double tolerance = 1e-12;  ///< stop once the running best falls below
};

struct MinimizeResult {
  GspCandidate candidate;
  double objective = kInf;
  /// Running best objective per iteration, starting with the projected initial point.
  std::vector<double> trace;
  std::size_t best_iteration = 0;
  bool converged = false;  ///< false: budget exhausted above tolerance
};

/// Discrete objective sum_i [sigma_E(dk_i) - <x_{i+1}, dk_i>] with k = x0 + m - x; +inf off the feasible set.
double gsp_homogeneous_objective(const OperatorSpec& op, const Vec& x0, const GridPath& m, const GridPath& x);

/// Minimizes the homogeneous objective over the node values of k (x = x0 + m - k) for
/// normal-cone kinds. With dk_i = k_{i+1} - k_i, k_0 = 0 and c = x0 + m it equals
/// sum_i [sigma_E(dk_i) + 1/2 |dk_i|^2 - <c_{i+1}, dk_i>] + 1/2 |k_N|^2 on {x_i in E}.
/// ADMM splits k from the increments and from the constraint copy; every iterate is
/// projected exactly onto the feasible set before evaluation, by Dykstra iterations for
/// coordinates with one infinite bound.
MinimizeResult minimize_gsp_jhat(const OperatorSpec& op, const Vec& x0, const GridPath& m,
                                 const MinimizeOptions& options = {});

// ---------------------------------------------------------------------------------------
// Additive-noise SDE

struct SdeCandidate {
  std::vector<Vec> eta;
  std::vector<GridPath> x;
  std::vector<BVPath> k;
  MatrixPath g;
};

/// Solver output as a candidate with eta = xi and g = G. Requires keep_paths.
SdeCandidate sde_candidate(const SdeEnsemble& sol, MatrixPath g);

/// Initial values of the ensemble paths.
std::vector<Vec> ensemble_xi(const SdeEnsemble& sol);

/// Monte Carlo 1/2 E|eta - xi|^2 + E[path gap] + 1/2 E sum |g_i - G_i|^2 dt_i over the
/// candidate paths, which must satisfy X + K = eta + sum g dB on the ensemble noise.
FunctionalReport sde_jhat(const OperatorSpec& op, std::span<const Vec> xi, const MatrixPath& G,
                          const WienerEnsemble& noise, const SdeCandidate& cand,
                          std::span<const GraphPair> probe_graph = {});

// ---------------------------------------------------------------------------------------
// Stochastic variational inequality

struct SviCandidate {
  std::vector<Vec> eta;
  std::vector<GridPath> x;
  std::vector<BVPath> l;
  MatrixPath g;
};

/// Solver output with L = K - int F(X) dt and g_i = G(t_i, X_i). Requires keep_paths.
SviCandidate svi_candidate(const SdeEnsemble& sol, const FieldCoefficients& coeffs);

struct SviProbes {
  /// Each probe is one path per ensemble path.
  std::vector<std::vector<GridPath>> processes;
  /// Adds U = X of the evaluated candidate.
  bool include_candidate = true;
};

/// max over probes U of J_U = 1/2 E|eta - xi|^2 + E sum_i [dt <U_{i+1} - X_{i+1}, F(t_i, U_i)>
/// + <U_{i+1} - X_{i+1}, dL_i> + 1/2 dt |g_i - G(t_i, U_i)|^2 + dt (phi(X_{i+1}) - phi(U_{i+1}))].
FunctionalReport svi_jhat(const OperatorSpec& phi, const FieldCoefficients& coeffs, std::span<const Vec> xi,
                          const WienerEnsemble& noise, const SviCandidate& cand, const SviProbes& probes);

// ---------------------------------------------------------------------------------------
// Backward equations on the tree

/// (eta, Y, H) with Y_n = eta and Y_i = E[Y_{i+1} | node] - dt H_i.
struct TreeCandidate {
  Mat eta;
  TreeProcess Y;
  TreeProcess H;
};

TreeCandidate tree_candidate(const BinomialTree& tree, const Mat& eta, const TreeProcess& H);

struct BsdeProbes {
  /// Leaf values of zeta; each must satisfy E|zeta|^2 <= R.
  std::vector<Mat> zeta;
  std::vector<GraphPair> probe_graph;
};

/// 1/2 E|eta - xi|^2 + sum_i E[H_A(Y_i, H_i) - <Y_i, H_i>] dt + 1/2 sup_{E|zeta|^2 <= R} [E|zeta - eta|^2 - E|zeta - xi|^2].
/// The last sup is taken in closed form; probe zetas are reported as a cross-check term.
FunctionalReport bsde_jhat(const OperatorSpec& op, const BinomialTree& tree, const Mat& xi, double R,
                           const TreeCandidate& cand, const BsdeProbes& probes = {});

/// (eta, G, Y, Z) with Y_n = eta, Y_i = E[Y_{i+1} | node] + dt G_i and Z the martingale difference.
struct BsviCandidate {
  Mat eta;
  TreeProcess G;
  TreeProcess Y;
  TreeProcess Z;
};

BsviCandidate bsvi_candidate(const BinomialTree& tree, const Mat& eta, const TreeProcess& G);
/// Solver output with eta = Y_n and G = F(Y, Z) - H.
BsviCandidate bsvi_candidate(const BsviSolution& sol);

struct BsviProbe {
  TreeProcess U;  ///< levels 0..n-1
  TreeProcess V;  ///< levels 0..n-1
};

struct BsviProbes {
  std::vector<BsviProbe> pairs;
  /// Adds (U, V) = (Y, Z) of the evaluated candidate.
  bool include_candidate = true;
};

/// max over probes of 1/2 E|eta - xi|^2 + sum_i dt E[<U_i - Y_i, F(t_i, U_i, V_i) - G_i>
/// - 1/2 |Z_i - V_i|^2 + phi(Y_i) - phi(U_i)], exact on the tree.
FunctionalReport bsvi_jhat(const OperatorSpec& phi, const BackwardDriver& F, const BinomialTree& tree, const Mat& xi,
                           const BsviCandidate& cand, const BsviProbes& probes);

// ---------------------------------------------------------------------------------------
// Convexity along segments

GspCandidate blend(const GspCandidate& p, const GspCandidate& q, double lambda);
SdeCandidate blend(const SdeCandidate& p, const SdeCandidate& q, double lambda);
SviCandidate blend(const SviCandidate& p, const SviCandidate& q, double lambda);
TreeCandidate blend(const TreeCandidate& p, const TreeCandidate& q, double lambda);
BsviCandidate blend(const BsviCandidate& p, const BsviCandidate& q, double lambda);

inline constexpr std::array<double, 3> kConvexityLambdas{0.25, 0.5, 0.75};

/// max over lambda of J(lambda p + (1 - lambda) q) - lambda J(p) - (1 - lambda) J(q); the
/// evaluator must use a probe set independent of the candidate.
template <class Candidate, class Evaluator>
double jhat_convexity_probe(const Evaluator& jhat, const Candidate& p, const Candidate& q,
                            std::span<const double> lambdas = kConvexityLambdas) {
  const double jp = jhat(p).total;
  const double jq = jhat(q).total;
  double worst = -kInf;
  for (const double lambda : lambdas) {
    const double jm = jhat(blend(p, q, lambda)).total;
    const double bound = lambda * jp + (1.0 - lambda) * jq;
    if (!std::isfinite(bound)) continue;  // an infinite right side bounds anything
    worst = std::max(worst, jm - bound);
  }
  return worst == -kInf ? 0.0 : worst;
}

}  // namespace mmfitz
