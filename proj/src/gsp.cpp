#include "mmfitz/gsp.hpp"

#include <algorithm>
#include <cmath>

namespace mmfitz {

std::string to_string(GspScheme scheme) {
  switch (scheme) {
    case GspScheme::catching_up:
      return "catching_up";
    case GspScheme::yosida_penalization:
      return "yosida_penalization";
    case GspScheme::reflection_oracle:
      return "reflection_oracle";
  }
  return "unknown";
}

GspScheme gsp_scheme_from_string(const std::string& name) {
  if (name == "catching_up") return GspScheme::catching_up;
  if (name == "yosida_penalization") return GspScheme::yosida_penalization;
  if (name == "reflection_oracle") return GspScheme::reflection_oracle;
  throw PreconditionError("unknown GSP scheme '" + name + "'");
}

GapMode natural_gap_mode(const OperatorSpec& op) { return op.is_normal_cone() ? GapMode::homogeneous : GapMode::density; }

namespace {

void check_driver(const OperatorSpec& op, const Vec& x0, const GridPath& m) {
  require(x0.size() == op.dim() && m.dim() == op.dim(), "solve_gsp: dimension mismatch");
  require(m.at(0).norm() == 0.0, "solve_gsp: driver must satisfy m(0) = 0");
  require(m.values.allFinite() && x0.allFinite(), "solve_gsp: non-finite input");
  if (op.has_constrained_domain()) {
    require((x0 - resolvent(op, 1e-8, x0)).norm() <= 1e-6, "solve_gsp: x0 is too far from cl Dom(A)");
  }
}

}  // namespace

GspDiagnostics diagnose(const OperatorSpec& op, const Vec& x0, const GridPath& m, const GridPath& x, const BVPath& k,
                        const std::optional<Sampling>& sampling) {
  require_same_grid(x.grid, k.grid, "diagnose");
  require_same_grid(x.grid, m.grid, "diagnose");
  GspDiagnostics d;
  d.sup_norm = x.sup_norm();
  d.total_variation = k.total_variation();
  d.max_dt = x.grid.max_dt();
  const Mat kv = k.values();
  for (std::size_t i = 0; i < x.grid.nodes(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    d.node_defect = std::max(d.node_defect, (x.values.col(c) + kv.col(c) - x0 - m.values.col(c)).norm());
  }
  const bool closed = fitzpatrick_closed_form(op, Vec::Zero(op.dim()), Vec::Zero(op.dim())).has_value();
  if (closed || sampling) {
    const PathGap g = path_fitz_gap(op, x, k, natural_gap_mode(op), sampling);
    d.max_step_gap = g.max_step();
    d.gap_exact = g.exact;
  }
  return d;
}

GspSolution solve_gsp(const OperatorSpec& op, const Vec& x0, const GridPath& m, const GspOptions& options) {
  check_driver(op, x0, m);
  require(options.scheme != GspScheme::reflection_oracle, "solve_gsp: use skorohod_1d_oracle for the reflection formula");
  require(options.scheme == GspScheme::catching_up || options.eps > 0.0, "solve_gsp: eps must be positive");
  const TimeGrid& grid = m.grid;
  const auto n = static_cast<Eigen::Index>(grid.steps());
  Mat xv(op.dim(), n + 1);
  Mat inc(op.dim(), n);
  xv.col(0) = x0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec z = xv.col(i) + (m.values.col(i + 1) - m.values.col(i));
    const double dt = grid.dt(static_cast<std::size_t>(i));
    const Vec next = options.scheme == GspScheme::catching_up ? resolvent(op, dt, z, options.resolvent)
                                                              : yosida_resolvent(op, options.eps, dt, z, options.resolvent);
    xv.col(i + 1) = next;
    inc.col(i) = z - next;
  }
  GspSolution sol{GridPath(grid, std::move(xv)), BVPath(grid, std::move(inc)), {}};
  sol.diagnostics = diagnose(op, x0, m, sol.x, sol.k, options.sampling);
  sol.diagnostics.scheme = options.scheme;
  sol.diagnostics.eps = options.scheme == GspScheme::yosida_penalization ? options.eps : 0.0;
  return sol;
}

GspSolution skorohod_1d_oracle(double x0, const GridPath& m) {
  require(m.dim() == 1, "skorohod_1d_oracle: driver must be one-dimensional");
  require(x0 >= 0.0, "skorohod_1d_oracle: x0 must be nonnegative");
  require(m.at(0).norm() == 0.0, "skorohod_1d_oracle: driver must satisfy m(0) = 0");
  const std::size_t nodes = m.grid.nodes();
  Mat kv(1, static_cast<Eigen::Index>(nodes));
  double worst = 0.0;
  for (std::size_t i = 0; i < nodes; ++i) {
    worst = std::max(worst, -(x0 + m.values(0, static_cast<Eigen::Index>(i))));
    kv(0, static_cast<Eigen::Index>(i)) = -worst;
  }
  Mat xv = (m.values.array() + x0).matrix() - kv;
  const auto op = OperatorSpec::half_line(1);
  GspSolution sol{GridPath(m.grid, std::move(xv)), BVPath::from_values(m.grid, kv), {}};
  sol.diagnostics = diagnose(op, Vec::Constant(1, x0), m, sol.x, sol.k);
  sol.diagnostics.scheme = GspScheme::reflection_oracle;
  return sol;
}

GspVerification verify_gsp(const OperatorSpec& op, const Vec& x0, const GridPath& m, const GridPath& x, const BVPath& k,
                           std::span<const GraphPair> probes) {
  require(!probes.empty(), "verify_gsp: probes must be nonempty");
  require_same_grid(x.grid, k.grid, "verify_gsp");
  require_same_grid(x.grid, m.grid, "verify_gsp");
  require(x.dim() == op.dim() && k.dim() == op.dim() && m.dim() == op.dim() && x0.size() == op.dim(),
          "verify_gsp: dimension mismatch");
  GspVerification out;
  const double m_sup = m.sup_norm();
  const double tv = k.total_variation();
  out.tolerance = 1e-7 * (1.0 + m_sup + (std::isfinite(tv) ? tv : 0.0));

  const Mat kv = k.values();
  for (std::size_t i = 0; i < x.grid.nodes(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    out.node_defect = std::max(out.node_defect, (x.values.col(c) + kv.col(c) - x0 - m.values.col(c)).norm());
    out.domain_defect = std::max(out.domain_defect, op.domain_distance(x.values.col(c)));
  }

  // Minimum contiguous window sum per probe (Kadane); the empty window contributes 0.
  const std::size_t steps = x.grid.steps();
  out.min_window = WindowWitness{0, 0, 0, 0.0};
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const GraphPair& z = probes[p];
    require(z.u.size() == op.dim() && z.ustar.size() == op.dim(), "verify_gsp: probe dimension mismatch");
    double running = 0.0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < steps; ++i) {
      const double term = (x.at(i + 1) - z.u).dot(k.increment(i) - z.ustar * x.grid.dt(i));
      if (running > 0.0) {
        running = 0.0;
        start = i;
      }
      running += term;
      if (running < out.min_window.value) out.min_window = WindowWitness{p, start, i + 1, running};
    }
  }

  const GapMode mode = natural_gap_mode(op);
  if (fitzpatrick_closed_form(op, Vec::Zero(op.dim()), Vec::Zero(op.dim()))) {
    out.path_gap = path_fitz_gap(op, x, k, mode).total;
  } else {
    std::vector<double> terms(steps);
    for (std::size_t i = 0; i < steps; ++i) {
      const Vec xi = x.at(i + 1);
      const double dt = x.grid.dt(i);
      const Vec rate = k.increment(i) / dt;
      terms[i] = (fitzpatrick_sampled(probes, xi, rate) - xi.dot(rate)) * dt;
    }
    out.path_gap = pairwise_sum(terms);
    out.path_gap_exact = false;
  }

  out.node_ok = out.node_defect <= 1e-12 * (1.0 + m_sup) + out.tolerance;
  out.domain_ok = out.domain_defect <= out.tolerance;
  out.inequality_ok = out.min_window.value >= -out.tolerance;
  out.gap_ok = out.path_gap <= out.tolerance;
  return out;
}

ProbeEstimate estimate_probe(const OperatorSpec& op, std::span<const GspCase> cases) {
  require(op.has_solid_cone_domain(), "estimate_probe: requires a box or ball domain with nonempty interior");
  require(!cases.empty(), "estimate_probe: need at least one case");
  std::vector<GspSolution> sols;
  sols.reserve(cases.size());
  for (const GspCase& c : cases) {
    require_same_grid(c.m.grid, cases.front().m.grid, "estimate_probe");
    sols.push_back(solve_gsp(op, c.x0, c.m));
  }
  ProbeEstimate out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const double s = sols[i].diagnostics.sup_norm;
    const double ratio = (s * s + sols[i].diagnostics.total_variation) / (1.0 + cases[i].x0.squaredNorm());
    out.c_apriori = std::max(out.c_apriori, ratio);
  }
  for (std::size_t i = 0; i < cases.size(); ++i) {
    for (std::size_t j = i + 1; j < cases.size(); ++j) {
      const double den = (1.0 + cases[i].x0.norm() + cases[j].x0.norm()) *
                         ((cases[i].x0 - cases[j].x0).norm() + std::sqrt(sup_distance(cases[i].m, cases[j].m)));
      if (den <= 0.0) continue;
      const double ratio = sup_distance(sols[i].x, sols[j].x) / den;
      out.c_holder = std::max(out.c_holder.value_or(0.0), ratio);
      ++out.pairs_used;
    }
  }
  return out;
}

}  // namespace mmfitz
