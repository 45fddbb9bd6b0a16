#include "mmfitz/fitzpatrick.hpp"

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

bool inside(double x, double lo, double hi) {
  const double lo_tol = lo - kDomainSlack * (1.0 + (std::isfinite(lo) ? std::abs(lo) : 0.0));
  const double hi_tol = hi + kDomainSlack * (1.0 + (std::isfinite(hi) ? std::abs(hi) : 0.0));
  return x >= lo_tol && x <= hi_tol;
}

bool inside_box(const Vec& x, const Vec& lo, const Vec& hi) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!inside(x[i], lo[i], hi[i])) return false;
  }
  return true;
}

bool inside_ball(const Vec& x, const Vec& c, double r) {
  return (x - c).norm() <= r * (1.0 + kDomainSlack) + kDomainSlack;
}

// Support function of the box; coordinates with zero direction contribute 0 even when unbounded.
double box_support(const Vec& lo, const Vec& hi, const Vec& s) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > 0.0) {
      if (!std::isfinite(hi[i])) return kInf;
      total += hi[i] * s[i];
    } else if (s[i] < 0.0) {
      if (!std::isfinite(lo[i])) return kInf;
      total += lo[i] * s[i];
    }
  }
  return total;
}

// Lexicographically smallest maximizer of <u, s> over the box (requires finite support).
Vec box_argmax(const Vec& lo, const Vec& hi, const Vec& s) {
  Vec u(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > 0.0) {
      u[i] = hi[i];
    } else if (s[i] < 0.0) {
      u[i] = lo[i];
    } else {
      u[i] = std::isfinite(lo[i]) ? lo[i] : std::min(0.0, hi[i]);
    }
  }
  return u;
}

Vec ball_argmax(const Vec& c, double r, const Vec& s) {
  const double n = s.norm();
  if (n == 0.0) return c;
  return c + s * (r / n);
}

// Cone part of a Sum with M = cI: E is a box or ball.
struct ConeSet {
  std::optional<NormalConeBox> box;
  std::optional<NormalConeBall> ball;

  bool contains(const Vec& x) const { return box ? inside_box(x, box->lo, box->hi) : inside_ball(x, ball->center, ball->radius); }
  Vec project(const Vec& x) const {
    if (box) return x.cwiseMax(box->lo).cwiseMin(box->hi);
    const Vec d = x - ball->center;
    const double n = d.norm();
    return n <= ball->radius ? x : Vec(ball->center + d * (ball->radius / n));
  }
};

std::optional<ConeSet> cone_of(const SubdiffPart& part) {
  return std::visit(overloaded{[](const NormalConeBox& b) -> std::optional<ConeSet> { return ConeSet{b, std::nullopt}; },
                               [](const SubdiffIndicatorInterval& s) -> std::optional<ConeSet> {
                                 return ConeSet{NormalConeBox{s.a, s.b}, std::nullopt};
                               },
                               [](const NormalConeBall& b) -> std::optional<ConeSet> { return ConeSet{std::nullopt, b}; },
                               [](const SubdiffAbsSum&) -> std::optional<ConeSet> { return std::nullopt; }},
                    part);
}

std::optional<double> identity_multiple(const Mat& m) {
  const double c = m(0, 0);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) != (i == j ? c : 0.0)) return std::nullopt;
    }
  }
  return c;
}

// Cholesky of the symmetric part when it is positive definite.
std::optional<Eigen::LLT<Mat>> definite_symmetric_part(const Mat& m) {
  const Mat sym = 0.5 * (m + m.transpose());
  Eigen::LLT<Mat> llt(sym);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const double min_eig = Eigen::SelfAdjointEigenSolver<Mat>(sym, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  if (min_eig <= 1e-12 * (1.0 + m.norm())) return std::nullopt;
  return llt;
}

// H and its maximizing pair for the closed-form kinds. maximizer stays empty when H = +inf.
struct Closed {
  double value;
  std::optional<GraphPair> pair;
};

Closed cone_closed(const ConeSet& e, const Vec& x, const Vec& xstar) {
  if (!e.contains(x)) return {kInf, std::nullopt};
  const Vec zero = Vec::Zero(x.size());
  if (e.box) {
    const double v = box_support(e.box->lo, e.box->hi, xstar);
    if (!std::isfinite(v)) return {kInf, std::nullopt};
    return {v, GraphPair{box_argmax(e.box->lo, e.box->hi, xstar), zero}};
  }
  const double v = e.ball->center.dot(xstar) + e.ball->radius * xstar.norm();
  return {v, GraphPair{ball_argmax(e.ball->center, e.ball->radius, xstar), zero}};
}

std::optional<Closed> closed(const OperatorSpec& op, const Vec& x, const Vec& xstar) {
  require(x.size() == op.dim() && xstar.size() == op.dim(), "fitzpatrick: dimension mismatch");
  return std::visit(
      overloaded{
          [&](const NormalConeBox& b) -> std::optional<Closed> { return cone_closed(ConeSet{b, std::nullopt}, x, xstar); },
          [&](const SubdiffIndicatorInterval& s) -> std::optional<Closed> {
            return cone_closed(ConeSet{NormalConeBox{s.a, s.b}, std::nullopt}, x, xstar);
          },
          [&](const NormalConeBall& b) -> std::optional<Closed> { return cone_closed(ConeSet{std::nullopt, b}, x, xstar); },
          [&](const SubdiffAbsSum& s) -> std::optional<Closed> {
            // pairs (u, u*) with u = 0 and |u*_j| <= w_j dominate whenever |x*_j| <= w_j
            Vec ustar(x.size());
            for (Eigen::Index j = 0; j < x.size(); ++j) {
              if (std::abs(xstar[j]) > s.weights[j] * (1.0 + kDomainSlack)) return Closed{kInf, std::nullopt};
              ustar[j] = x[j] > 0.0 ? s.weights[j] : (x[j] < 0.0 ? -s.weights[j] : 0.0);
            }
            return Closed{s.weights.dot(x.cwiseAbs()), GraphPair{Vec::Zero(x.size()), ustar}};
          },
          [&](const ScaledIdentity& s) -> std::optional<Closed> {
            if (s.c == 0.0) {
              if (xstar.norm() > kDomainSlack) return Closed{kInf, std::nullopt};
              return Closed{0.0, GraphPair{Vec::Zero(x.size()), Vec::Zero(x.size())}};
            }
            const Vec w = xstar + s.c * x;
            const Vec u = w / (2.0 * s.c);
            return Closed{w.squaredNorm() / (4.0 * s.c), GraphPair{u, s.c * u}};
          },
          [&](const LinearMonotone& l) -> std::optional<Closed> {
            auto llt = definite_symmetric_part(l.matrix);
            if (!llt) return std::nullopt;
            const Vec w = xstar + l.matrix.transpose() * x;
            const Vec u = 0.5 * llt->solve(w);
            return Closed{0.5 * w.dot(u), GraphPair{u, l.matrix * u}};
          },
          [&](const SumOperator& s) -> std::optional<Closed> {
            auto c = identity_multiple(s.linear.matrix);
            auto e = cone_of(s.part);
            if (!c || !e) return std::nullopt;
            if (*c == 0.0) return cone_closed(*e, x, xstar);
            if (!e->contains(x)) return Closed{kInf, std::nullopt};
            // sup over u in E of <u, s> - c|u|^2 with s = x* + c x
            const Vec sv = xstar + *c * x;
            const Vec p = sv / (2.0 * *c);
            const Vec u = e->project(p);
            const double value = sv.squaredNorm() / (4.0 * *c) - *c * (p - u).squaredNorm();
            return Closed{value, GraphPair{u, *c * u}};
          }},
      op.kind());
}

double gap_of(double h, const Vec& x, const Vec& xstar) { return std::isfinite(h) ? h - x.dot(xstar) : kInf; }

}  // namespace

std::optional<double> fitzpatrick_closed_form(const OperatorSpec& op, const Vec& x, const Vec& xstar) {
  auto c = closed(op, x, xstar);
  if (!c) return std::nullopt;
  return c->value;
}

std::optional<GraphPair> fitzpatrick_maximizer(const OperatorSpec& op, const Vec& x, const Vec& xstar) {
  auto c = closed(op, x, xstar);
  if (!c) return std::nullopt;
  return c->pair;
}

double fitzpatrick_sampled(std::span<const GraphPair> pairs, const Vec& x, const Vec& xstar, std::size_t* argmax) {
  double best = -kInf;
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const GraphPair& p = pairs[i];
    const double v = p.u.dot(xstar) + x.dot(p.ustar) - p.u.dot(p.ustar);
    if (v > best) {
      best = v;
      best_i = i;
    }
  }
  if (argmax) *argmax = best_i;
  return best;
}

FitzEvaluator::FitzEvaluator(OperatorSpec op, std::optional<Sampling> sampling) : op_(std::move(op)) {
  const Vec probe = Vec::Zero(op_.dim());
  closed_ = closed(op_, probe, probe).has_value();
  if (!closed_) {
    require(sampling.has_value(), "fitzpatrick: sampling required for operator " + op_.tag());
    samples_ = graph_sample(op_, sampling->box, sampling->n, sampling->eps, sampling->seed);
    require(!samples_.empty(), "fitzpatrick: sampling produced no graph pairs");
  }
}

FitzValue FitzEvaluator::value(const Vec& x, const Vec& xstar) const {
  if (closed_) return {closed(op_, x, xstar)->value, true};
  require(x.size() == op_.dim() && xstar.size() == op_.dim(), "fitzpatrick: dimension mismatch");
  return {fitzpatrick_sampled(samples_, x, xstar), false};
}

FitzValue fitz_pointwise(const OperatorSpec& op, const Vec& x, const Vec& xstar, const std::optional<Sampling>& sampling) {
  if (auto c = closed(op, x, xstar)) return {c->value, true};
  require(sampling.has_value(), "fitz_pointwise: sampling required for operator " + op.tag());
  const auto pairs = graph_sample(op, sampling->box, sampling->n, sampling->eps, sampling->seed);
  require(!pairs.empty(), "fitz_pointwise: sampling produced no graph pairs");
  return {fitzpatrick_sampled(pairs, x, xstar), false};
}

GapReport fitz_gap(const OperatorSpec& op, const Vec& x, const Vec& xstar, const std::optional<Sampling>& sampling) {
  if (auto c = closed(op, x, xstar)) return {gap_of(c->value, x, xstar), true, c->pair};
  require(sampling.has_value(), "fitz_gap: sampling required for operator " + op.tag());
  const auto pairs = graph_sample(op, sampling->box, sampling->n, sampling->eps, sampling->seed);
  require(!pairs.empty(), "fitz_gap: sampling produced no graph pairs");
  std::size_t best = 0;
  const double h = fitzpatrick_sampled(pairs, x, xstar, &best);
  return {gap_of(h, x, xstar), false, pairs[best]};
}

MembershipResult membership_test(const OperatorSpec& op, const Vec& x, const Vec& xstar, double tol,
                                 const std::optional<Sampling>& sampling) {
  require(tol > 0.0, "membership_test: tol must be positive");
  MembershipResult out;
  out.report = fitz_gap(op, x, xstar, sampling);
  out.resolvent_defect = (x - resolvent(op, 1.0, x + xstar)).norm();
  out.member = out.report.gap <= tol;
  if (!out.report.exact) out.member = out.member && out.resolvent_defect <= tol;
  return out;
}

double fenchel_gap(const OperatorSpec& op, const Vec& x, const Vec& xstar, const Sampling& sampling) {
  auto hx = fitzpatrick_closed_form(op, x, xstar);
  require(hx.has_value(), "fenchel_gap: no closed-form Fitzpatrick function for " + op.tag());
  if (!std::isfinite(*hx)) return kInf;

  // H*(x*, x) = sup over (y, y*) of <y, x*> + <x, y*> - H(y, y*)
  auto term = [&](const Vec& y, const Vec& ystar) {
    const double h = *fitzpatrick_closed_form(op, y, ystar);
    return std::isfinite(h) ? y.dot(xstar) + x.dot(ystar) - h : -kInf;
  };
  double conj = term(x, xstar);
  for (const GraphPair& p : graph_sample(op, sampling.box, sampling.n, sampling.eps, sampling.seed)) {
    conj = std::max(conj, term(p.u, p.ustar));
  }
  std::mt19937_64 rng(derive_seed(sampling.seed, 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec y(op.dim());
  Vec ystar(op.dim());
  for (std::size_t s = 0; s < sampling.n; ++s) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double width = sampling.box.hi[i] - sampling.box.lo[i];
      y[i] = sampling.box.lo[i] + width * unit(rng);
      ystar[i] = sampling.box.lo[i] + width * unit(rng);
    }
    conj = std::max(conj, term(y, ystar));
  }
  return *hx + conj - 2.0 * x.dot(xstar);
}

double PathGap::max_step() const {
  double m = 0.0;
  for (double v : per_step) m = std::max(m, v);
  return m;
}

PathGap path_fitz_gap(const FitzEvaluator& fitz, const GridPath& x, const BVPath& k, GapMode mode) {
  require_same_grid(x.grid, k.grid, "path_fitz_gap");
  require(x.dim() == fitz.op().dim() && k.dim() == fitz.op().dim(), "path_fitz_gap: dimension mismatch");
  require(mode == GapMode::density || fitz.op().is_normal_cone(),
          "path_fitz_gap: homogeneous mode requires a normal-cone operator");
  PathGap out;
  out.per_step.resize(k.grid.steps());
  out.exact = fitz.closed_form();
  for (std::size_t i = 0; i < k.grid.steps(); ++i) {
    const Vec xi = x.at(i + 1);
    const Vec dk = k.increment(i);
    if (mode == GapMode::homogeneous) {
      out.per_step[i] = gap_of(fitz.value(xi, dk).value, xi, dk);
    } else {
      const double dt = k.grid.dt(i);
      const Vec rate = dk / dt;
      const double g = gap_of(fitz.value(xi, rate).value, xi, rate);
      out.per_step[i] = std::isfinite(g) ? g * dt : kInf;
    }
  }
  out.total = pairwise_sum(out.per_step);
  return out;
}

PathGap path_fitz_gap(const OperatorSpec& op, const GridPath& x, const BVPath& k, GapMode mode,
                      const std::optional<Sampling>& sampling) {
  return path_fitz_gap(FitzEvaluator(op, sampling), x, k, mode);
}

}  // namespace mmfitz
