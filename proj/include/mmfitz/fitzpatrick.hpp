// Fitzpatrick function H_A(x, x*) = sup{<u, x*> + <x, u*> - <u, u*> : (u, u*) in gr A}
// and the residuals built from it.
//
// H_A >= <x, x*> everywhere with equality exactly on gr(A), so the gap
// H_A(x, x*) - <x, x*> is a scalar certificate of graph membership. Closed forms
// are used whenever the kind admits one; otherwise a sup over sampled graph pairs
// is returned and flagged as a lower bound (exact = false).
#pragma once

#include "mmfitz/operators.hpp"
#include "mmfitz/paths.hpp"

#include <optional>
#include <span>
#include <vector>

namespace mmfitz {

struct FitzValue {
  double value = 0.0;  ///< may be +inf
  bool exact = true;   ///< false: certified lower bound from a finite sample
};

/// Sample budget for kinds without a closed form.
struct Sampling {
  SamplingBox box;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  double eps = 1.0;
};

/// Closed-form H_A(x, x*), or nullopt when the kind has none.
std::optional<double> fitzpatrick_closed_form(const OperatorSpec& op, const Vec& x, const Vec& xstar);

/// Graph pair attaining the sup in the closed form; (u*, u) is a subgradient of H at (x, x*).
std::optional<GraphPair> fitzpatrick_maximizer(const OperatorSpec& op, const Vec& x, const Vec& xstar);

/// sup over the given pairs; index of the best pair written to argmax when non-null.
double fitzpatrick_sampled(std::span<const GraphPair> pairs, const Vec& x, const Vec& xstar,
                           std::size_t* argmax = nullptr);

/// Evaluates H_A with a fixed sample set reused across calls.
class FitzEvaluator {
 public:
  explicit FitzEvaluator(OperatorSpec op, std::optional<Sampling> sampling = std::nullopt);

  const OperatorSpec& op() const noexcept { return op_; }
  FitzValue value(const Vec& x, const Vec& xstar) const;
  /// Whether every evaluation is closed form.
  bool closed_form() const noexcept { return closed_; }
  const std::vector<GraphPair>& samples() const noexcept { return samples_; }

 private:
  OperatorSpec op_;
  bool closed_ = true;
  std::vector<GraphPair> samples_;
};

FitzValue fitz_pointwise(const OperatorSpec& op, const Vec& x, const Vec& xstar,
                         const std::optional<Sampling>& sampling = std::nullopt);

struct GapReport {
  double gap = 0.0;  ///< H(x, x*) - <x, x*>, possibly +inf
  bool exact = true;
  std::optional<GraphPair> witness;
};

GapReport fitz_gap(const OperatorSpec& op, const Vec& x, const Vec& xstar,
                   const std::optional<Sampling>& sampling = std::nullopt);

struct MembershipResult {
  bool member = false;
  GapReport report;
  /// |x - J_1(x + x*)|, the fixed-point characterization of (x, x*) in gr A.
  double resolvent_defect = 0.0;
};

/// With a closed form: member iff gap <= tol. With sampling, membership additionally
/// requires resolvent_defect <= tol, since a sampled sup cannot certify a small gap.
MembershipResult membership_test(const OperatorSpec& op, const Vec& x, const Vec& xstar, double tol,
                                 const std::optional<Sampling>& sampling = std::nullopt);

/// H(x, x*) + H*(x*, x) - 2<x, x*>, the conjugate taken as a sampled sup over
/// graph samples, random product-space points and (x, x*) itself.
double fenchel_gap(const OperatorSpec& op, const Vec& x, const Vec& xstar, const Sampling& sampling);

enum class GapMode {
  homogeneous,  ///< sum_i H(x_{i+1}, dk_i) - <x_{i+1}, dk_i>; normal cones only
  density,      ///< sum_i [H(x_{i+1}, dk_i/dt_i) - <x_{i+1}, dk_i/dt_i>] dt_i
};

struct PathGap {
  double total = 0.0;
  std::vector<double> per_step;
  bool exact = true;

  double max_step() const;
};

/// Discrete Fitzpatrick residual of the realization on paths; x evaluated at the right
/// endpoint of each step, matching the catching-up inclusion dk_i in dt_i A(x_{i+1}).
PathGap path_fitz_gap(const FitzEvaluator& fitz, const GridPath& x, const BVPath& k, GapMode mode);
PathGap path_fitz_gap(const OperatorSpec& op, const GridPath& x, const BVPath& k, GapMode mode,
                      const std::optional<Sampling>& sampling = std::nullopt);

}  // namespace mmfitz
