#include "mmfitz/operators.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mmfitz {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool has_nan(const Vec& v) { return v.hasNaN(); }

bool inside_interval(double x, double lo, double hi) {
  const double lo_tol = lo - kDomainSlack * (1.0 + std::abs(std::isfinite(lo) ? lo : 0.0));
  const double hi_tol = hi + kDomainSlack * (1.0 + std::abs(std::isfinite(hi) ? hi : 0.0));
  return x >= lo_tol && x <= hi_tol;
}

bool inside_box(const Vec& x, const Vec& lo, const Vec& hi) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!inside_interval(x[i], lo[i], hi[i])) return false;
  }
  return true;
}

Vec clamp(const Vec& x, const Vec& lo, const Vec& hi) { return x.cwiseMax(lo).cwiseMin(hi); }

void validate_box(const Vec& lo, const Vec& hi, const char* what) {
  require(lo.size() == hi.size() && lo.size() > 0, std::string(what) + ": bound dimensions differ or are empty");
  require(!has_nan(lo) && !has_nan(hi), std::string(what) + ": NaN bound");
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    require(lo[i] <= hi[i], std::string(what) + ": lo > hi in coordinate " + std::to_string(i));
    require(lo[i] < kInf && hi[i] > -kInf, std::string(what) + ": empty coordinate range");
  }
}

void validate_linear(const LinearMonotone& lin) {
  const Mat& m = lin.matrix;
  require(m.rows() == m.cols() && m.rows() > 0, "LinearMonotone: matrix must be square and nonempty");
  require(m.allFinite(), "LinearMonotone: non-finite entry");
  const Mat sym = 0.5 * (m + m.transpose());
  const double min_eig = Eigen::SelfAdjointEigenSolver<Mat>(sym, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  require(min_eig >= -1e-10 * (1.0 + m.norm()), "LinearMonotone: symmetric part is not positive semidefinite");
}

Eigen::Index part_dim(const SubdiffPart& part) {
  return std::visit(overloaded{[](const NormalConeBox& b) { return b.lo.size(); },
                               [](const NormalConeBall& b) { return b.center.size(); },
                               [](const SubdiffAbsSum& s) { return s.weights.size(); },
                               [](const SubdiffIndicatorInterval& s) { return s.a.size(); }},
                    part);
}

void validate_part(const SubdiffPart& part) {
  std::visit(overloaded{[](const NormalConeBox& b) { validate_box(b.lo, b.hi, "NormalConeBox"); },
                        [](const NormalConeBall& b) {
                          require(b.center.size() > 0 && b.center.allFinite(), "NormalConeBall: bad center");
                          require(std::isfinite(b.radius) && b.radius > 0.0, "NormalConeBall: radius must be positive");
                        },
                        [](const SubdiffAbsSum& s) {
                          require(s.weights.size() > 0 && s.weights.allFinite(), "SubdiffAbsSum: bad weights");
                          require(s.weights.minCoeff() > 0.0, "SubdiffAbsSum: weights must be positive");
                        },
                        [](const SubdiffIndicatorInterval& s) { validate_box(s.a, s.b, "SubdiffIndicatorInterval"); }},
             part);
}

Vec part_resolvent(const SubdiffPart& part, double eps, const Vec& x) {
  return std::visit(
      overloaded{[&](const NormalConeBox& b) -> Vec { return clamp(x, b.lo, b.hi); },
                 [&](const SubdiffIndicatorInterval& s) -> Vec { return clamp(x, s.a, s.b); },
                 [&](const NormalConeBall& b) -> Vec {
                   const Vec d = x - b.center;
                   const double n = d.norm();
                   if (n <= b.radius) return x;
                   return b.center + d * (b.radius / n);
                 },
                 [&](const SubdiffAbsSum& s) -> Vec {
                   Vec y(x.size());
                   for (Eigen::Index i = 0; i < x.size(); ++i) {
                     const double t = eps * s.weights[i];
                     y[i] = x[i] > t ? x[i] - t : (x[i] < -t ? x[i] + t : 0.0);
                   }
                   return y;
                 }},
      part);
}

double part_potential(const SubdiffPart& part, const Vec& x) {
  return std::visit(overloaded{[&](const NormalConeBox& b) { return inside_box(x, b.lo, b.hi) ? 0.0 : kInf; },
                               [&](const SubdiffIndicatorInterval& s) { return inside_box(x, s.a, s.b) ? 0.0 : kInf; },
                               [&](const NormalConeBall& b) {
                                 const double r = (x - b.center).norm();
                                 return r <= b.radius * (1.0 + kDomainSlack) + kDomainSlack ? 0.0 : kInf;
                               },
                               [&](const SubdiffAbsSum& s) { return s.weights.dot(x.cwiseAbs()); }},
                    part);
}

double part_domain_distance(const SubdiffPart& part, const Vec& x) {
  return std::visit(overloaded{[&](const NormalConeBox& b) { return (x - clamp(x, b.lo, b.hi)).norm(); },
                               [&](const SubdiffIndicatorInterval& s) { return (x - clamp(x, s.a, s.b)).norm(); },
                               [&](const NormalConeBall& b) {
                                 return std::max(0.0, (x - b.center).norm() - b.radius);
                               },
                               [&](const SubdiffAbsSum&) { return 0.0; }},
                    part);
}

bool part_is_cone(const SubdiffPart& part) { return !std::holds_alternative<SubdiffAbsSum>(part); }

std::optional<double> scalar_multiple_of_identity(const Mat& m) {
  const double c = m(0, 0);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) != (i == j ? c : 0.0)) return std::nullopt;
    }
  }
  return c;
}

}  // namespace

OperatorSpec::OperatorSpec(Kind kind) : kind_(std::move(kind)) {
  dim_ = std::visit(overloaded{[](const NormalConeBox& b) {
                                 validate_box(b.lo, b.hi, "NormalConeBox");
                                 return b.lo.size();
                               },
                               [](const NormalConeBall& b) {
                                 validate_part(b);
                                 return b.center.size();
                               },
                               [](const SubdiffAbsSum& s) {
                                 validate_part(s);
                                 return s.weights.size();
                               },
                               [](const SubdiffIndicatorInterval& s) {
                                 validate_box(s.a, s.b, "SubdiffIndicatorInterval");
                                 return s.a.size();
                               },
                               [](const LinearMonotone& l) {
                                 validate_linear(l);
                                 return l.matrix.rows();
                               },
                               [](const ScaledIdentity& s) {
                                 require(std::isfinite(s.c) && s.c >= 0.0, "ScaledIdentity: c must be >= 0");
                                 require(s.dim > 0, "ScaledIdentity: dimension must be positive");
                                 return s.dim;
                               },
                               [](const SumOperator& s) {
                                 validate_linear(s.linear);
                                 validate_part(s.part);
                                 require(s.linear.matrix.rows() == part_dim(s.part), "SumOperator: dimension mismatch");
                                 return s.linear.matrix.rows();
                               }},
                    kind_);
}

OperatorSpec OperatorSpec::normal_cone_box(Vec lo, Vec hi) {
  return OperatorSpec(NormalConeBox{std::move(lo), std::move(hi)});
}

OperatorSpec OperatorSpec::half_line(Eigen::Index dim) {
  return normal_cone_box(Vec::Zero(dim), Vec::Constant(dim, kInf));
}

OperatorSpec OperatorSpec::normal_cone_ball(Vec center, double radius) {
  return OperatorSpec(NormalConeBall{std::move(center), radius});
}

OperatorSpec OperatorSpec::abs_sum(Vec weights) { return OperatorSpec(SubdiffAbsSum{std::move(weights)}); }

OperatorSpec OperatorSpec::indicator_interval(Vec a, Vec b) {
  return OperatorSpec(SubdiffIndicatorInterval{std::move(a), std::move(b)});
}

OperatorSpec OperatorSpec::linear(Mat matrix) { return OperatorSpec(LinearMonotone{std::move(matrix)}); }

OperatorSpec OperatorSpec::scaled_identity(double c, Eigen::Index dim) { return OperatorSpec(ScaledIdentity{c, dim}); }

OperatorSpec OperatorSpec::sum(LinearMonotone linear, SubdiffPart part) {
  return OperatorSpec(SumOperator{std::move(linear), std::move(part)});
}

std::string OperatorSpec::tag() const {
  return std::visit(overloaded{[](const NormalConeBox&) { return std::string("NormalConeBox"); },
                               [](const NormalConeBall&) { return std::string("NormalConeBall"); },
                               [](const SubdiffAbsSum&) { return std::string("SubdiffAbsSum"); },
                               [](const SubdiffIndicatorInterval&) { return std::string("SubdiffIndicatorInterval"); },
                               [](const LinearMonotone&) { return std::string("LinearMonotone"); },
                               [](const ScaledIdentity&) { return std::string("ScaledIdentity"); },
                               [](const SumOperator&) { return std::string("Sum"); }},
                    kind_);
}

bool OperatorSpec::is_normal_cone() const {
  return std::holds_alternative<NormalConeBox>(kind_) || std::holds_alternative<NormalConeBall>(kind_) ||
         std::holds_alternative<SubdiffIndicatorInterval>(kind_);
}

bool OperatorSpec::has_constrained_domain() const {
  if (is_normal_cone()) return true;
  if (const auto* s = std::get_if<SumOperator>(&kind_)) return part_is_cone(s->part);
  return false;
}

bool OperatorSpec::is_subdifferential() const {
  if (const auto* l = std::get_if<LinearMonotone>(&kind_)) return l->matrix.isApprox(l->matrix.transpose(), 1e-14);
  if (const auto* s = std::get_if<SumOperator>(&kind_)) {
    return s->linear.matrix.isApprox(s->linear.matrix.transpose(), 1e-14);
  }
  return true;
}

bool OperatorSpec::has_solid_cone_domain() const {
  if (std::holds_alternative<NormalConeBall>(kind_)) return true;
  auto solid_box = [](const Vec& lo, const Vec& hi) { return (hi - lo).minCoeff() > 0.0; };
  if (const auto* b = std::get_if<NormalConeBox>(&kind_)) return solid_box(b->lo, b->hi);
  if (const auto* s = std::get_if<SubdiffIndicatorInterval>(&kind_)) return solid_box(s->a, s->b);
  return false;
}

double OperatorSpec::potential(const Vec& x) const {
  require(x.size() == dim_, "potential: dimension mismatch");
  require(is_subdifferential(), "potential: operator " + tag() + " is not a subdifferential");
  return std::visit(overloaded{[&](const NormalConeBox& b) { return part_potential(b, x); },
                               [&](const NormalConeBall& b) { return part_potential(b, x); },
                               [&](const SubdiffAbsSum& s) { return part_potential(s, x); },
                               [&](const SubdiffIndicatorInterval& s) { return part_potential(s, x); },
                               [&](const LinearMonotone& l) { return 0.5 * x.dot(l.matrix * x); },
                               [&](const ScaledIdentity& s) { return 0.5 * s.c * x.squaredNorm(); },
                               [&](const SumOperator& s) {
                                 return 0.5 * x.dot(s.linear.matrix * x) + part_potential(s.part, x);
                               }},
                    kind_);
}

double OperatorSpec::domain_distance(const Vec& x) const {
  require(x.size() == dim_, "domain_distance: dimension mismatch");
  return std::visit(overloaded{[&](const NormalConeBox& b) { return part_domain_distance(b, x); },
                               [&](const NormalConeBall& b) { return part_domain_distance(b, x); },
                               [&](const SubdiffIndicatorInterval& s) { return part_domain_distance(s, x); },
                               [&](const SumOperator& s) { return part_domain_distance(s.part, x); },
                               [](const auto&) { return 0.0; }},
                    kind_);
}

Vec resolvent(const OperatorSpec& op, double eps, const Vec& x, const ResolventOptions& options) {
  require(eps > 0.0 && std::isfinite(eps), "resolvent: eps must be positive");
  require(x.size() == op.dim(), "resolvent: dimension mismatch");
  return std::visit(
      overloaded{[&](const NormalConeBox& b) -> Vec { return part_resolvent(b, eps, x); },
                 [&](const NormalConeBall& b) -> Vec { return part_resolvent(b, eps, x); },
                 [&](const SubdiffAbsSum& s) -> Vec { return part_resolvent(s, eps, x); },
                 [&](const SubdiffIndicatorInterval& s) -> Vec { return part_resolvent(s, eps, x); },
                 [&](const ScaledIdentity& s) -> Vec { return x / (1.0 + eps * s.c); },
                 [&](const LinearMonotone& l) -> Vec {
                   const Mat system = Mat::Identity(x.size(), x.size()) + eps * l.matrix;
                   return system.partialPivLu().solve(x);
                 },
                 [&](const SumOperator& s) -> Vec {
                   if (auto c = scalar_multiple_of_identity(s.linear.matrix)) {
                     const double scale = 1.0 + eps * *c;
                     return part_resolvent(s.part, eps / scale, x / scale);
                   }
                   Vec y = part_resolvent(s.part, eps, x);
                   double residual = kInf;
                   for (int it = 0; it < options.max_iterations; ++it) {
                     const Vec target = part_resolvent(s.part, eps, x - eps * (s.linear.matrix * y));
                     const Vec next = (1.0 - options.damping) * y + options.damping * target;
                     residual = (next - y).norm();
                     y = next;
                     if (!std::isfinite(residual)) break;
                     if (residual <= options.tolerance * std::max(1.0, y.norm())) return y;
                   }
                   // The damped map need not contract when eps*|M| is large. Douglas-Rachford on
                   // (y - x)/eps + M y and dphi converges for every eps.
                   const Eigen::Index d = x.size();
                   const auto affine = (Mat::Identity(d, d) * 2.0 + eps * s.linear.matrix).partialPivLu();
                   Vec z = x;
                   for (int it = 0; it < options.max_iterations; ++it) {
                     const Vec w = affine.solve(z + x);
                     const Vec p = part_resolvent(s.part, eps, 2.0 * w - z);
                     residual = (p - w).norm();
                     z += p - w;
                     if (!std::isfinite(residual)) break;
                     if (residual <= options.tolerance * std::max(1.0, w.norm())) return p;
                   }
                   throw ConvergenceError("resolvent of Sum operator did not converge", residual);
                 }},
      op.kind());
}

YosidaPair yosida(const OperatorSpec& op, double eps, const Vec& x, const ResolventOptions& options) {
  YosidaPair out;
  out.jx = resolvent(op, eps, x, options);
  out.ax = (x - out.jx) / eps;
  return out;
}

Vec yosida_resolvent(const OperatorSpec& op, double eps, double lambda, const Vec& x,
                     const ResolventOptions& options) {
  require(eps > 0.0 && lambda > 0.0, "yosida_resolvent: eps and lambda must be positive");
  // (I + lambda A_eps)^{-1} = I - lambda A_{eps + lambda}
  const YosidaPair p = yosida(op, eps + lambda, x, options);
  return x - lambda * p.ax;
}

std::vector<GraphPair> graph_sample(const OperatorSpec& op, const SamplingBox& box, std::size_t n, double eps,
                                    std::uint64_t seed) {
  require(box.lo.size() == op.dim() && box.hi.size() == op.dim(), "graph_sample: box dimension mismatch");
  require(eps > 0.0, "graph_sample: eps must be positive");
  for (Eigen::Index i = 0; i < op.dim(); ++i) {
    require(box.lo[i] < box.hi[i] && std::isfinite(box.lo[i]) && std::isfinite(box.hi[i]),
            "graph_sample: need finite lo < hi in every coordinate");
  }
  std::vector<GraphPair> pairs;
  pairs.reserve(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec v(op.dim());
  for (std::size_t s = 0; s < n; ++s) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * unit(rng);
    YosidaPair p = yosida(op, eps, v);
    pairs.push_back(GraphPair{std::move(p.jx), std::move(p.ax)});
  }
  return pairs;
}

double monotonicity_certificate(std::span<const GraphPair> pairs) {
  require(pairs.size() >= 2, "monotonicity_certificate: need at least two pairs");
  double best = kInf;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = i + 1; j < pairs.size(); ++j) {
      const double v = (pairs[i].u - pairs[j].u).dot(pairs[i].ustar - pairs[j].ustar);
      best = std::min(best, v);
    }
  }
  return best;
}

}  // namespace mmfitz
