#include "mmfitz/forward_sde.hpp"

#include <algorithm>
#include <cmath>

namespace mmfitz {

WienerEnsemble::WienerEnsemble(TimeGrid grid, Eigen::Index dims, std::size_t paths, std::uint64_t seed)
    : grid_(std::move(grid)), dims_(dims), paths_(paths), seed_(seed) {
  require(grid_.steps() > 0, "WienerEnsemble: grid needs at least one step");
  require(dims_ > 0, "WienerEnsemble: dims must be positive");
}

Mat WienerEnsemble::increments(std::size_t path) const {
  std::mt19937_64 rng(derive_seed(derive_seed(seed_, path), 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto steps = static_cast<Eigen::Index>(grid_.steps());
  Mat db(dims_, steps);
  for (Eigen::Index i = 0; i < steps; ++i) {
    const double s = std::sqrt(grid_.dt(static_cast<std::size_t>(i)));
    for (Eigen::Index r = 0; r < dims_; ++r) db(r, i) = s * normal(rng);
  }
  return db;
}

std::mt19937_64 WienerEnsemble::initial_stream(std::size_t path) const {
  return std::mt19937_64(derive_seed(derive_seed(seed_, path), 1));
}

MatrixPath constant_matrix(Mat g) {
  return [g = std::move(g)](std::size_t, std::size_t, double) { return g; };
}

XiSampler constant_xi(Vec xi) {
  return [xi = std::move(xi)](std::size_t, std::mt19937_64&) { return xi; };
}

double dissipativity_defect(const FieldCoefficients& coeffs, double horizon, const SamplingBox& box, std::size_t n,
                            std::uint64_t seed) {
  require(static_cast<bool>(coeffs.F) && static_cast<bool>(coeffs.G), "dissipativity_defect: F and G must be set");
  require(box.lo.size() == box.hi.size() && (box.lo.array() <= box.hi.array()).all(),
          "dissipativity_defect: malformed box");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&] {
    Vec v(box.lo.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = box.lo[i] + unit(rng) * (box.hi[i] - box.lo[i]);
    return v;
  };
  double worst = -kInf;
  for (std::size_t s = 0; s < n; ++s) {
    const double t = unit(rng) * horizon;
    const Vec x = draw();
    const Vec y = draw();
    const double value =
        2.0 * (x - y).dot(coeffs.F(t, x) - coeffs.F(t, y)) + (coeffs.G(t, x) - coeffs.G(t, y)).squaredNorm();
    worst = std::max(worst, value);
  }
  return worst;
}

Vec clip_to_domain(const OperatorSpec& op, const Vec& xi) {
  require(xi.size() == op.dim(), "clip_to_domain: dimension mismatch");
  if (!op.has_constrained_domain() || op.domain_distance(xi) == 0.0) return xi;
  return resolvent(op, 1e-12, xi);
}

namespace {

void finish(SdeEnsemble& out) {
  std::vector<double> sq(out.paths.size());
  std::vector<double> tv(out.paths.size());
  for (std::size_t p = 0; p < out.paths.size(); ++p) {
    sq[p] = out.paths[p].sup_x * out.paths[p].sup_x;
    tv[p] = out.paths[p].tv_k;
    out.max_node_defect = std::max(out.max_node_defect, out.paths[p].node_defect);
    out.max_fitz_gap = std::max(out.max_fitz_gap, out.paths[p].fitz_gap);
  }
  out.sup_x_squared = estimate_mean(sq);
  out.tv_k = estimate_mean(tv);
}

PathSummary summarize(const FitzEvaluator& fitz, const Vec& xi, const GridPath& x, const BVPath& k, const Mat& driver) {
  PathSummary s;
  s.xi = xi;
  s.x_terminal = x.at(x.grid.nodes() - 1);
  s.sup_x = x.sup_norm();
  s.tv_k = k.total_variation();
  s.fitz_gap = path_fitz_gap(fitz, x, k, natural_gap_mode(fitz.op())).total;
  const Mat kv = k.values();
  for (Eigen::Index i = 0; i < x.values.cols(); ++i) {
    s.node_defect = std::max(s.node_defect, (x.values.col(i) + kv.col(i) - xi - driver.col(i)).norm());
  }
  return s;
}

bool evaluable(const OperatorSpec& op, const std::optional<Sampling>& sampling) {
  return sampling || fitzpatrick_closed_form(op, Vec::Zero(op.dim()), Vec::Zero(op.dim())).has_value();
}

}  // namespace

SdeEnsemble solve_sde_additive(const OperatorSpec& op, const XiSampler& xi, const MatrixPath& g,
                               const WienerEnsemble& noise, const SdeOptions& options) {
  require(static_cast<bool>(xi) && static_cast<bool>(g), "solve_sde_additive: sampler and diffusion must be set");
  require(evaluable(op, options.sampling), "solve_sde_additive: operator without closed-form H needs sampling");
  const TimeGrid& grid = noise.grid();
  const FitzEvaluator fitz(op, options.sampling);
  GspOptions gsp;
  gsp.scheme = GspScheme::catching_up;
  gsp.resolvent = options.resolvent;

  SdeEnsemble out;
  out.grid = grid;
  out.gap_exact = fitz.closed_form();
  const auto steps = static_cast<Eigen::Index>(grid.steps());
  for (std::size_t p = 0; p < noise.paths(); ++p) {
    auto stream = noise.initial_stream(p);
    const Vec x0 = clip_to_domain(op, xi(p, stream));
    const Mat db = noise.increments(p);
    Mat mv = Mat::Zero(op.dim(), steps + 1);
    for (Eigen::Index i = 0; i < steps; ++i) {
      const auto step = static_cast<std::size_t>(i);
      const Mat gi = g(p, step, grid.times()[step]);
      require(gi.rows() == op.dim() && gi.cols() == noise.dims(), "solve_sde_additive: diffusion has wrong shape");
      mv.col(i + 1) = mv.col(i) + gi * db.col(i);
    }
    GridPath m(grid, mv);
    GspSolution sol = solve_gsp(op, x0, m, gsp);
    out.paths.push_back(summarize(fitz, x0, sol.x, sol.k, mv));
    if (options.keep_paths) {
      out.x.push_back(std::move(sol.x));
      out.k.push_back(std::move(sol.k));
    }
  }
  finish(out);
  return out;
}

PathPair solve_svi_path(const OperatorSpec& phi, const FieldCoefficients& coeffs, const Vec& xi, const TimeGrid& grid,
                        const Mat& increments, const ResolventOptions& resolvent_options) {
  require(xi.size() == phi.dim(), "solve_svi_path: dimension mismatch");
  require(increments.cols() == static_cast<Eigen::Index>(grid.steps()), "solve_svi_path: increments do not match grid");
  const auto steps = static_cast<Eigen::Index>(grid.steps());
  Mat xv(phi.dim(), steps + 1);
  Mat kv(phi.dim(), steps);
  xv.col(0) = xi;
  for (Eigen::Index i = 0; i < steps; ++i) {
    const auto step = static_cast<std::size_t>(i);
    const double t = grid.times()[step];
    const double dt = grid.dt(step);
    const Vec x = xv.col(i);
    const Vec f = coeffs.F(t, x);
    const Mat g = coeffs.G(t, x);
    require(f.size() == phi.dim() && g.rows() == phi.dim() && g.cols() == increments.rows(),
            "solve_svi_path: coefficient has wrong shape");
    if (!f.allFinite() || !g.allFinite()) throw PreconditionError("solve_svi_path: non-finite coefficient value");
    const Vec z = x + f * dt + g * increments.col(i);
    xv.col(i + 1) = resolvent(phi, dt, z, resolvent_options);
    kv.col(i) = z - xv.col(i + 1);
  }
  return PathPair{GridPath(grid, std::move(xv)), BVPath(grid, std::move(kv))};
}

SdeEnsemble solve_svi(const OperatorSpec& phi, const FieldCoefficients& coeffs, const XiSampler& xi,
                      const WienerEnsemble& noise, const SdeOptions& options) {
  require(phi.is_subdifferential(), "solve_svi: operator must be a subdifferential kind");
  require(static_cast<bool>(coeffs.F) && static_cast<bool>(coeffs.G) && static_cast<bool>(xi),
          "solve_svi: F, G and the initial sampler must be set");
  require(evaluable(phi, options.sampling), "solve_svi: operator without closed-form H needs sampling");
  const TimeGrid& grid = noise.grid();
  if (coeffs.dissipative) {
    const SamplingBox box{Vec::Constant(phi.dim(), -options.check_half_width),
                          Vec::Constant(phi.dim(), options.check_half_width)};
    const double defect = dissipativity_defect(coeffs, grid.horizon(), box, options.check_samples, options.check_seed);
    require(defect <= 1e-9, "solve_svi: coefficients flagged dissipative fail the sampled check (defect " +
                                std::to_string(defect) + ")");
  }
  const FitzEvaluator fitz(phi, options.sampling);
  SdeEnsemble out;
  out.grid = grid;
  out.gap_exact = fitz.closed_form();
  const auto steps = static_cast<Eigen::Index>(grid.steps());
  for (std::size_t p = 0; p < noise.paths(); ++p) {
    auto stream = noise.initial_stream(p);
    const Vec x0 = clip_to_domain(phi, xi(p, stream));
    const Mat db = noise.increments(p);
    PathPair pp = solve_svi_path(phi, coeffs, x0, grid, db, options.resolvent);
    // Driver of the node identity: int F(X) dt + int G(X) dB along the computed path.
    Mat driver = Mat::Zero(phi.dim(), steps + 1);
    for (Eigen::Index i = 0; i < steps; ++i) {
      const auto step = static_cast<std::size_t>(i);
      const double t = grid.times()[step];
      const Vec x = pp.x.values.col(i);
      driver.col(i + 1) = driver.col(i) + coeffs.F(t, x) * grid.dt(step) + coeffs.G(t, x) * db.col(i);
    }
    out.paths.push_back(summarize(fitz, x0, pp.x, pp.k, driver));
    if (options.keep_paths) {
      out.x.push_back(std::move(pp.x));
      out.k.push_back(std::move(pp.k));
    }
  }
  finish(out);
  return out;
}

namespace {

// Kadane over per-step terms; updates the witness when a window beats its current value.
void min_window(const std::vector<double>& terms, std::size_t probe, WindowWitness& best) {
  double running = 0.0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (running > 0.0) {
      running = 0.0;
      start = i;
    }
    running += terms[i];
    if (running < best.value) best = WindowWitness{probe, start, i + 1, running};
  }
}

}  // namespace

SviVerification verify_svi(const OperatorSpec& phi, const GridPath& x, const BVPath& k,
                           std::span<const GraphPair> probes) {
  require(!probes.empty(), "verify_svi: probes must be nonempty");
  require(phi.is_subdifferential(), "verify_svi: operator must be a subdifferential kind");
  require_same_grid(x.grid, k.grid, "verify_svi");
  require(x.dim() == phi.dim() && k.dim() == phi.dim(), "verify_svi: dimension mismatch");
  SviVerification out;
  const double tv = k.total_variation();
  out.tolerance = 1e-7 * (1.0 + (std::isfinite(tv) ? tv : 0.0));
  const std::size_t steps = x.grid.steps();
  std::vector<double> phi_x(steps);
  for (std::size_t i = 0; i < steps; ++i) phi_x[i] = phi.potential(x.at(i + 1));

  std::vector<double> terms(steps);
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const GraphPair& z = probes[p];
    require(z.u.size() == phi.dim() && z.ustar.size() == phi.dim(), "verify_svi: probe dimension mismatch");
    for (std::size_t i = 0; i < steps; ++i) {
      terms[i] = (x.at(i + 1) - z.u).dot(k.increment(i) - z.ustar * x.grid.dt(i));
    }
    min_window(terms, p, out.min_window_a2);
    const double phi_z = phi.potential(z.u);
    if (!std::isfinite(phi_z)) continue;
    for (std::size_t i = 0; i < steps; ++i) {
      const double dt = x.grid.dt(i);
      terms[i] = std::isfinite(phi_x[i]) ? (phi_z - phi_x[i]) * dt + (x.at(i + 1) - z.u).dot(k.increment(i)) : -kInf;
    }
    min_window(terms, p, out.min_window_a1);
  }

  const GapMode mode = natural_gap_mode(phi);
  if (fitzpatrick_closed_form(phi, Vec::Zero(phi.dim()), Vec::Zero(phi.dim()))) {
    out.path_gap = path_fitz_gap(phi, x, k, mode).total;
  } else {
    std::vector<double> gaps(steps);
    for (std::size_t i = 0; i < steps; ++i) {
      const double dt = x.grid.dt(i);
      const Vec rate = k.increment(i) / dt;
      const Vec xi = x.at(i + 1);
      gaps[i] = (fitzpatrick_sampled(probes, xi, rate) - xi.dot(rate)) * dt;
    }
    out.path_gap = pairwise_sum(gaps);
    out.path_gap_exact = false;
  }
  out.a1_ok = out.min_window_a1.value >= -out.tolerance;
  out.a2_ok = out.min_window_a2.value >= -out.tolerance;
  return out;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), "ks_statistic: samples must be nonempty");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double ks_critical_value(std::size_t n, std::size_t m, double alpha) {
  require(n > 0 && m > 0 && alpha > 0.0 && alpha < 1.0, "ks_critical_value: invalid arguments");
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(m);
  return c * std::sqrt((nn + mm) / (nn * mm));
}

}  // namespace mmfitz
