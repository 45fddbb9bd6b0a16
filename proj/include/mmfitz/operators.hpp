// Maximal monotone operators on R^d described through their resolvents.
//
// Every operator kind here admits a computable resolvent J_eps = (I + eps A)^{-1}.
// Graph points are produced by the Yosida push (J_eps v, A_eps v), which lies in
// gr(A) exactly, so no membership tolerance is ever needed for sampled pairs.
#pragma once

#include "mmfitz/core.hpp"

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace mmfitz {

/// Normal cone of the box [lo, hi]; bounds may be infinite.
struct NormalConeBox {
  Vec lo;
  Vec hi;
};

/// Normal cone of the closed ball B(center, radius).
struct NormalConeBall {
  Vec center;
  double radius = 1.0;
};

/// Subdifferential of x -> sum_i w_i |x_i|.
struct SubdiffAbsSum {
  Vec weights;
};

/// Subdifferential of the indicator of prod_i [a_i, b_i].
struct SubdiffIndicatorInterval {
  Vec a;
  Vec b;
};

/// x -> M x with M + M^T positive semidefinite.
struct LinearMonotone {
  Mat matrix;
};

/// x -> c x, c >= 0.
struct ScaledIdentity {
  double c = 1.0;
  Eigen::Index dim = 1;
};

using SubdiffPart = std::variant<NormalConeBox, NormalConeBall, SubdiffAbsSum, SubdiffIndicatorInterval>;

/// M + dphi for a linear monotone M and one subdifferential part.
struct SumOperator {
  LinearMonotone linear;
  SubdiffPart part;
};

class OperatorSpec {
 public:
  using Kind = std::variant<NormalConeBox, NormalConeBall, SubdiffAbsSum, SubdiffIndicatorInterval,
                            LinearMonotone, ScaledIdentity, SumOperator>;

  /// Validates parameters; throws PreconditionError on malformed input.
  explicit OperatorSpec(Kind kind);

  static OperatorSpec normal_cone_box(Vec lo, Vec hi);
  static OperatorSpec half_line(Eigen::Index dim = 1);
  static OperatorSpec normal_cone_ball(Vec center, double radius);
  static OperatorSpec abs_sum(Vec weights);
  static OperatorSpec indicator_interval(Vec a, Vec b);
  static OperatorSpec linear(Mat matrix);
  static OperatorSpec scaled_identity(double c, Eigen::Index dim);
  static OperatorSpec sum(LinearMonotone linear, SubdiffPart part);

  const Kind& kind() const noexcept { return kind_; }
  Eigen::Index dim() const noexcept { return dim_; }
  std::string tag() const;

  /// Normal cone of a closed convex set (box, ball or interval product).
  bool is_normal_cone() const;
  /// Dom(A) is a proper closed subset of R^d.
  bool has_constrained_domain() const;
  /// A = dphi for a proper convex lsc phi available through potential().
  bool is_subdifferential() const;
  /// int Dom(A) is nonempty and Dom(A) is a box or ball.
  bool has_solid_cone_domain() const;

  /// phi(x) for subdifferential kinds (+inf outside Dom phi).
  double potential(const Vec& x) const;

  /// Euclidean distance from x to cl Dom(A) (0 for full-domain kinds).
  double domain_distance(const Vec& x) const;

 private:
  Kind kind_;
  Eigen::Index dim_ = 0;
};

struct ResolventOptions {
  double damping = 0.5;
  int max_iterations = 10'000;
  double tolerance = 1e-12;
};

/// J_eps(x) = (I + eps A)^{-1} x.
Vec resolvent(const OperatorSpec& op, double eps, const Vec& x, const ResolventOptions& options = {});

struct YosidaPair {
  Vec jx;
  Vec ax;
};

/// (J_eps x, A_eps x) with A_eps x = (x - J_eps x) / eps in A(J_eps x).
YosidaPair yosida(const OperatorSpec& op, double eps, const Vec& x, const ResolventOptions& options = {});

/// A point (u, u*) of gr(A).
struct GraphPair {
  Vec u;
  Vec ustar;
};

struct SamplingBox {
  Vec lo;
  Vec hi;
};

/// n exact graph pairs obtained by pushing uniform points of the box through the Yosida map.
std::vector<GraphPair> graph_sample(const OperatorSpec& op, const SamplingBox& box, std::size_t n, double eps,
                                    std::uint64_t seed);

/// min over distinct pairs of <u - v, u* - v*>; >= -1e-12 for monotone graphs.
double monotonicity_certificate(std::span<const GraphPair> pairs);

/// Resolvent of the Yosida approximation A_eps at step lambda: y + lambda A_eps(y) = x.
Vec yosida_resolvent(const OperatorSpec& op, double eps, double lambda, const Vec& x,
                     const ResolventOptions& options = {});

}  // namespace mmfitz
