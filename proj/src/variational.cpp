#include "mmfitz/variational.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <sstream>

namespace mmfitz {

double FunctionalReport::term(const std::string& name) const {
  for (const FunctionalTerm& t : terms) {
    if (t.name == name) return t.value;
  }
  throw PreconditionError("FunctionalReport: no term named '" + name + "'");
}

std::string to_text(const FunctionalReport& report) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "total = " << report.total << "\n";
  os << "standard_error = " << report.standard_error << "\n";
  os << "certified_lower_bound = " << (report.certified_lower_bound ? "true" : "false") << "\n";
  os << "probes_used = " << report.probes_used << "\n";
  for (const FunctionalTerm& t : report.terms) {
    os << "term." << t.name << " = " << t.value << ", " << t.standard_error << "\n";
  }
  for (std::size_t i = 0; i < report.probe_values.size(); ++i) {
    os << "probe." << i << " = " << report.probe_values[i] << "\n";
  }
  return os.str();
}

namespace {

bool has_closed_form(const OperatorSpec& op) {
  return fitzpatrick_closed_form(op, Vec::Zero(op.dim()), Vec::Zero(op.dim())).has_value();
}

// Path gap with the closed form when available, otherwise a sup over the given graph pairs.
PathGap path_gap(const OperatorSpec& op, std::span<const GraphPair> probe_graph, const GridPath& x, const BVPath& k,
                 const char* what) {
  if (has_closed_form(op)) return path_fitz_gap(FitzEvaluator(op), x, k, natural_gap_mode(op));
  require(!probe_graph.empty(), std::string(what) + ": operator without closed-form H needs probe_graph");
  PathGap g;
  g.exact = false;
  g.per_step.resize(k.grid.steps());
  for (std::size_t i = 0; i < k.grid.steps(); ++i) {
    const double dt = k.grid.dt(i);
    const Vec xi = x.at(i + 1);
    const Vec rate = k.increment(i) / dt;
    // H >= <x, x*> everywhere, so clamping the sampled bound at zero keeps it a lower bound.
    g.per_step[i] = std::max(fitzpatrick_sampled(probe_graph, xi, rate) - xi.dot(rate), 0.0) * dt;
  }
  g.total = pairwise_sum(g.per_step);
  return g;
}

// H_A(y, h) - <y, h> with the closed form or the sampled sup.
double point_gap(const OperatorSpec& op, std::span<const GraphPair> probe_graph, const Vec& y, const Vec& h) {
  if (const auto v = fitzpatrick_closed_form(op, y, h)) return std::isfinite(*v) ? *v - y.dot(h) : kInf;
  return std::max(fitzpatrick_sampled(probe_graph, y, h) - y.dot(h), 0.0);
}

double finite_or_zero(double v) { return std::isfinite(v) ? v : 0.0; }

FunctionalTerm mc_term(const std::string& name, std::span<const double> values) {
  const MeanEstimate e = estimate_mean(values);
  return FunctionalTerm{name, e.mean, e.standard_error};
}

}  // namespace

// ---------------------------------------------------------------------------------------
// Generalized Skorohod problem

double constraint_defect(const GspCandidate& c) {
  require_same_grid(c.x.grid, c.k.grid, "constraint_defect");
  require_same_grid(c.x.grid, c.mu.grid, "constraint_defect");
  require(c.x.dim() == c.a.size() && c.k.dim() == c.a.size() && c.mu.dim() == c.a.size(),
          "constraint_defect: dimension mismatch");
  const Mat kv = c.k.values();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < kv.cols(); ++i) {
    worst = std::max(worst, (c.x.values.col(i) + kv.col(i) - c.a - c.mu.values.col(i)).norm());
  }
  return worst;
}

ModulusTable::ModulusTable(std::vector<double> deltas, std::vector<double> values)
    : deltas_(std::move(deltas)), values_(std::move(values)) {
  require(!deltas_.empty() && deltas_.size() == values_.size(), "ModulusTable: need matching nonempty tables");
  require(deltas_.front() == 0.0 && values_.front() == 0.0, "ModulusTable: alpha(0) must be 0");
  for (std::size_t i = 1; i < deltas_.size(); ++i) {
    require(deltas_[i] > deltas_[i - 1], "ModulusTable: deltas must increase");
    require(values_[i] >= values_[i - 1], "ModulusTable: alpha must be nondecreasing");
  }
}

ModulusTable ModulusTable::empirical(std::span<const GridPath> family) {
  require(!family.empty(), "ModulusTable::empirical: family must be nonempty");
  const TimeGrid& grid = family.front().grid;
  std::vector<double> deltas{0.0};
  for (double d = grid.max_dt(); d < grid.horizon(); d *= 2.0) deltas.push_back(d);
  deltas.push_back(grid.horizon());
  std::vector<double> values(deltas.size(), 0.0);
  for (const GridPath& path : family) {
    require_same_grid(path.grid, grid, "ModulusTable::empirical");
    for (std::size_t i = 1; i < deltas.size(); ++i) values[i] = std::max(values[i], path.modulus(deltas[i]));
  }
  for (std::size_t i = 1; i < values.size(); ++i) values[i] = std::max(values[i], values[i - 1]);
  return ModulusTable(std::move(deltas), std::move(values));
}

double ModulusTable::operator()(double delta) const {
  require(!deltas_.empty(), "ModulusTable: empty table");
  if (delta <= 0.0) return 0.0;
  if (delta >= deltas_.back()) return values_.back();
  const auto it = std::upper_bound(deltas_.begin(), deltas_.end(), delta);
  const std::size_t hi = static_cast<std::size_t>(it - deltas_.begin());
  const double w = (delta - deltas_[hi - 1]) / (deltas_[hi] - deltas_[hi - 1]);
  return (1.0 - w) * values_[hi - 1] + w * values_[hi];
}

bool ModulusTable::admits(const GridPath& nu, double slack) const {
  for (std::size_t i = 1; i < deltas_.size(); ++i) {
    if (nu.modulus(deltas_[i]) > values_[i] + slack * (1.0 + values_[i])) return false;
  }
  return true;
}

FunctionalParams default_gsp_params(const BVPath& reference_k, std::span<const GridPath> family,
                                    std::vector<GridPath> probe_nu) {
  FunctionalParams p;
  const double tv = reference_k.total_variation();
  p.R = tv > 0.0 ? 2.0 * tv : 1.0;
  if (!family.empty()) p.alpha = ModulusTable::empirical(family);
  p.probe_nu = std::move(probe_nu);
  return p;
}

FunctionalReport gsp_jhat(const OperatorSpec& op, const Vec& x0, const GridPath& m, const FunctionalParams& params,
                          const GspCandidate& cand) {
  require(x0.size() == op.dim() && m.dim() == op.dim(), "gsp_jhat: dimension mismatch");
  require_same_grid(cand.x.grid, m.grid, "gsp_jhat");
  require(params.R > 0.0, "gsp_jhat: R must be positive");
  const double tv = cand.k.total_variation();
  const double scale = 1.0 + cand.a.norm() + cand.mu.sup_norm() + finite_or_zero(tv);
  require(constraint_defect(cand) <= 1e-9 * scale, "gsp_jhat: candidate violates x + k = a + mu");
  require(tv <= params.R * (1.0 + 1e-12), "gsp_jhat: var(k) exceeds the budget R");
  for (const GridPath& nu : params.probe_nu) {
    require_same_grid(nu.grid, m.grid, "gsp_jhat");
    require(nu.dim() == op.dim(), "gsp_jhat: probe dimension mismatch");
    require(params.alpha.empty() || params.alpha.admits(nu), "gsp_jhat: probe nu lies outside C_alpha");
  }

  FunctionalReport r;
  const double initial = (cand.a - x0).squaredNorm();
  const PathGap gap = path_gap(op, params.probe_graph, cand.x, cand.k, "gsp_jhat");
  const double drift = 2.0 * params.R * sup_distance(cand.mu, m);

  std::vector<const GridPath*> nus{&m, &cand.mu};
  for (const GridPath& nu : params.probe_nu) nus.push_back(&nu);
  const std::size_t steps = m.grid.steps();
  std::vector<double> pairing(steps);
  double nu_term = -kInf;
  for (const GridPath* nu : nus) {
    for (std::size_t i = 0; i < steps; ++i) pairing[i] = (cand.mu.at(i + 1) - nu->at(i + 1)).dot(cand.k.increment(i));
    const double value = pairwise_sum(pairing) - params.R * sup_distance(*nu, m);
    r.probe_values.push_back(value);
    nu_term = std::max(nu_term, value);
  }

  r.terms = {{"initial", initial, 0.0}, {"fitz_gap", gap.total, 0.0}, {"drift", drift, 0.0}, {"nu", nu_term, 0.0}};
  r.total = std::isfinite(gap.total) ? initial + gap.total + drift + nu_term : kInf;
  r.probes_used = nus.size();
  return r;
}

double gsp_homogeneous_objective(const OperatorSpec& op, const Vec& x0, const GridPath& m, const GridPath& x) {
  require(op.is_normal_cone(), "gsp_homogeneous_objective: requires a normal-cone operator");
  require_same_grid(x.grid, m.grid, "gsp_homogeneous_objective");
  const Mat kv = (m.values.colwise() + x0) - x.values;
  for (Eigen::Index i = 0; i < x.values.cols(); ++i) {
    if (op.domain_distance(x.values.col(i)) > kDomainSlack * (1.0 + x.values.col(i).norm())) return kInf;
  }
  return path_fitz_gap(FitzEvaluator(op), x, BVPath::from_values(x.grid, kv), GapMode::homogeneous).total;
}

namespace {

// Nondecreasing least-squares fit (pool adjacent violators), unit weights.
void isotonic_increasing(std::vector<double>& v) {
  std::vector<double> mean;
  std::vector<std::size_t> size;
  for (const double value : v) {
    mean.push_back(value);
    size.push_back(1);
    while (mean.size() > 1 && mean[mean.size() - 2] > mean.back()) {
      const std::size_t n = size.back() + size[size.size() - 2];
      const double merged =
          (mean.back() * static_cast<double>(size.back()) + mean[mean.size() - 2] * static_cast<double>(size[size.size() - 2])) /
          static_cast<double>(n);
      mean.pop_back();
      size.pop_back();
      mean.back() = merged;
      size.back() = n;
    }
  }
  std::size_t pos = 0;
  for (std::size_t b = 0; b < mean.size(); ++b) {
    for (std::size_t r = 0; r < size[b]; ++r) v[pos++] = mean[b];
  }
}

// Projection of k_1..k_N onto {k nonincreasing, k_1 <= 0, k_i <= b_i} by Dykstra's algorithm
// between the monotone cone (with the constant bound) and the pointwise bounds.
void project_nonincreasing_bounded(std::vector<double>& k, const std::vector<double>& b) {
  const std::size_t n = k.size();
  std::vector<double> p(n, 0.0), q(n, 0.0), u(n), y = k;
  auto monotone = [](std::vector<double>& v) {
    for (double& e : v) e = -e;
    isotonic_increasing(v);
    for (double& e : v) e = std::min(-e, 0.0);
  };
  double scale = 1.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(k[i]) + std::abs(b[i]));
  for (int it = 0; it < 100'000; ++it) {
    for (std::size_t i = 0; i < n; ++i) u[i] = y[i] + p[i];
    monotone(u);
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = y[i] + p[i] - u[i];
      const double next = std::min(u[i] + q[i], b[i]);
      q[i] = u[i] + q[i] - next;
      change = std::max(change, std::abs(next - y[i]));
      y[i] = next;
    }
    if (change <= 1e-15 * scale) break;
  }
  // Restore exact monotonicity lost to rounding; only decreases entries, so bounds still hold.
  double running = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    running = std::min(running, y[i]);
    k[i] = running;
  }
}

// Projection of the k-path (column 0 fixed at 0) onto the feasible set of the homogeneous objective.
void project_feasible(const OperatorSpec& op, const Vec& x0, const Mat& m, Mat& k) {
  const Eigen::Index n = k.cols() - 1;
  k.col(0).setZero();
  if (const auto* ball = std::get_if<NormalConeBall>(&op.kind())) {
    for (Eigen::Index i = 1; i <= n; ++i) {
      const Vec x = x0 + m.col(i) - k.col(i);
      k.col(i) = x0 + m.col(i) - resolvent(op, 1.0, x);
    }
    (void)ball;
    return;
  }
  Vec lo, hi;
  if (const auto* b = std::get_if<NormalConeBox>(&op.kind())) {
    lo = b->lo;
    hi = b->hi;
  } else {
    const auto& s = std::get<SubdiffIndicatorInterval>(op.kind());
    lo = s.a;
    hi = s.b;
  }
  std::vector<double> row(static_cast<std::size_t>(n)), bound(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < k.rows(); ++r) {
    const bool lo_finite = std::isfinite(lo[r]);
    const bool hi_finite = std::isfinite(hi[r]);
    for (Eigen::Index i = 1; i <= n; ++i) {
      const double base = x0[r] + m(r, i);
      if (lo_finite && hi_finite) {
        k(r, i) = std::clamp(k(r, i), base - hi[r], base - lo[r]);
      } else if (!lo_finite && !hi_finite) {
        k(r, i) = 0.0;
      } else {
        // lo finite: k nonincreasing, k <= base - lo. hi finite: mirror by negation.
        const double sign = lo_finite ? 1.0 : -1.0;
        row[static_cast<std::size_t>(i - 1)] = sign * k(r, i);
        bound[static_cast<std::size_t>(i - 1)] = lo_finite ? base - lo[r] : hi[r] - base;
      }
    }
    if (lo_finite != hi_finite) {
      project_nonincreasing_bounded(row, bound);
      const double sign = lo_finite ? 1.0 : -1.0;
      for (Eigen::Index i = 1; i <= n; ++i) k(r, i) = sign * row[static_cast<std::size_t>(i - 1)];
    }
  }
}

}  // namespace

namespace {

// ADMM for min 1/2 |k_N|^2 + sum_i h_i(d_i) + I_C(z) subject to d = Dk, z = k, where
// h_i(d) = sigma_E(d) + 1/2 |d|^2 - <c_{i+1}, d> and C = {c_i - k_i in E}. Columns are nodes 1..N.
class GspAdmm {
 public:
  GspAdmm(const OperatorSpec& op, Mat c, double rho) : op_(op), c_(std::move(c)), rho_(rho) {
    const Eigen::Index n = c_.cols();
    std::vector<Eigen::Triplet<double>> entries;
    for (Eigen::Index j = 0; j < n; ++j) {
      entries.emplace_back(j, j, rho_ * ((j + 1 < n ? 2.0 : 1.0) + 1.0) + (j + 1 == n ? 1.0 : 0.0));
      if (j + 1 < n) {
        entries.emplace_back(j, j + 1, -rho_);
        entries.emplace_back(j + 1, j, -rho_);
      }
    }
    Eigen::SparseMatrix<double> system(n, n);
    system.setFromTriplets(entries.begin(), entries.end());
    solver_.compute(system);
    require(solver_.info() == Eigen::Success, "minimize_gsp_jhat: ADMM system factorization failed");
    k_ = Mat::Zero(c_.rows(), n);
    d_ = u_ = v_ = k_;
    z_ = project(k_);
  }

  void step() {
    // k-update: (rho (D^T D + I) + e_N e_N^T) k^T = rho D^T (d - u) + rho (z - v), per coordinate.
    const Mat rhs = rho_ * (transpose_difference(d_ - u_) + z_ - v_);
    k_ = solver_.solve(rhs.transpose()).transpose();
    const Mat dk = difference(k_);
    const double s = 1.0 + rho_;
    for (Eigen::Index i = 0; i < k_.cols(); ++i) {
      const Vec w = (rho_ * (dk.col(i) + u_.col(i)) + c_.col(i)) / s;
      d_.col(i) = w - resolvent(op_, 1.0, Vec(s * w)) / s;  // Moreau: prox of sigma_E / s
    }
    z_ = project(k_ + v_);
    u_ += dk - d_;
    v_ += k_ - z_;
  }

  const Mat& z() const noexcept { return z_; }

 private:
  static Mat difference(const Mat& k) {
    Mat d = k;
    d.rightCols(k.cols() - 1) -= k.leftCols(k.cols() - 1);
    return d;
  }
  static Mat transpose_difference(const Mat& y) {
    Mat out = y;
    out.leftCols(y.cols() - 1) -= y.rightCols(y.cols() - 1);
    return out;
  }
  Mat project(const Mat& k) const {
    Mat out(k.rows(), k.cols());
    for (Eigen::Index i = 0; i < k.cols(); ++i) out.col(i) = c_.col(i) - resolvent(op_, 1.0, Vec(c_.col(i) - k.col(i)));
    return out;
  }

  const OperatorSpec& op_;
  Mat c_;
  double rho_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
  Mat k_, d_, z_, u_, v_;
};

}  // namespace

MinimizeResult minimize_gsp_jhat(const OperatorSpec& op, const Vec& x0, const GridPath& m,
                                 const MinimizeOptions& options) {
  require(op.is_normal_cone(), "minimize_gsp_jhat: requires a normal-cone operator");
  require(x0.size() == op.dim() && m.dim() == op.dim(), "minimize_gsp_jhat: dimension mismatch");
  require(m.at(0).norm() == 0.0, "minimize_gsp_jhat: driver must satisfy m(0) = 0");
  require(op.domain_distance(x0) == 0.0, "minimize_gsp_jhat: x0 must lie in E");
  require(options.step > 0.0 && options.penalty > 0.0, "minimize_gsp_jhat: step and penalty must be positive");
  const TimeGrid& grid = m.grid;
  const auto n = static_cast<Eigen::Index>(grid.steps());
  const FitzEvaluator fitz(op);

  auto evaluate = [&](const Mat& kv, Mat* grad) {
    const Mat xv = (m.values.colwise() + x0) - kv;
    const BVPath k = BVPath::from_values(grid, kv);
    const double f = path_fitz_gap(fitz, GridPath(grid, xv), k, GapMode::homogeneous).total;
    if (grad != nullptr && std::isfinite(f)) {
      grad->setZero(kv.rows(), kv.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        const Vec dk = kv.col(i + 1) - kv.col(i);
        const Vec s = fitzpatrick_maximizer(op, xv.col(i + 1), dk)->u;
        grad->col(i + 1) += s + dk - xv.col(i + 1);
        if (i > 0) grad->col(i) += xv.col(i + 1) - s;
      }
    }
    return f;
  };

  Mat kv = Mat::Zero(op.dim(), n + 1);
  project_feasible(op, x0, m.values, kv);
  Mat grad;
  double f = evaluate(kv, options.method == MinimizeMethod::subgradient ? &grad : nullptr);
  require(std::isfinite(f), "minimize_gsp_jhat: projected start is infeasible");

  MinimizeResult out;
  Mat best = kv;
  out.objective = f;
  out.trace.push_back(f);
  auto record = [&](std::size_t j) {
    if (f < out.objective) {
      out.objective = f;
      out.best_iteration = j;
      best = kv;
    }
    out.trace.push_back(out.objective);
  };

  if (options.method == MinimizeMethod::admm && n > 0) {
    GspAdmm admm(op, (m.values.rightCols(n).colwise() + x0), options.penalty);
    for (std::size_t j = 1; j <= options.iterations && out.objective > options.tolerance; ++j) {
      admm.step();
      kv.rightCols(n) = admm.z();
      project_feasible(op, x0, m.values, kv);
      f = evaluate(kv, nullptr);
      record(j);
    }
  } else if (options.method == MinimizeMethod::subgradient) {
    for (std::size_t j = 1; j <= options.iterations && out.objective > options.tolerance; ++j) {
      const double g2 = grad.squaredNorm();
      if (g2 == 0.0) break;
      const double step = options.rule == StepRule::polyak ? f / g2 : options.step / std::sqrt(static_cast<double>(j));
      kv -= step * grad;
      project_feasible(op, x0, m.values, kv);
      f = evaluate(kv, &grad);
      record(j);
      if (!std::isfinite(f)) break;
    }
  }
  const Mat xv = (m.values.colwise() + x0) - best;
  out.candidate = GspCandidate{x0, GridPath(grid, xv), BVPath::from_values(grid, best), m};
  out.converged = out.objective <= options.tolerance;
  return out;
}

// ---------------------------------------------------------------------------------------
// Additive-noise SDE

SdeCandidate sde_candidate(const SdeEnsemble& sol, MatrixPath g) {
  require(sol.x.size() == sol.paths.size(), "sde_candidate: ensemble was solved without keep_paths");
  return SdeCandidate{ensemble_xi(sol), sol.x, sol.k, std::move(g)};
}

std::vector<Vec> ensemble_xi(const SdeEnsemble& sol) {
  std::vector<Vec> out;
  out.reserve(sol.paths.size());
  for (const PathSummary& p : sol.paths) out.push_back(p.xi);
  return out;
}

namespace {

// Node values of sum_j g_j dB_j along one path.
Mat stochastic_integral(const MatrixPath& g, const TimeGrid& grid, const Mat& db, std::size_t path, Eigen::Index dim) {
  const auto steps = static_cast<Eigen::Index>(grid.steps());
  Mat out = Mat::Zero(dim, steps + 1);
  for (Eigen::Index i = 0; i < steps; ++i) {
    const auto step = static_cast<std::size_t>(i);
    const Mat gi = g(path, step, grid.times()[step]);
    require(gi.rows() == dim && gi.cols() == db.rows(), "stochastic integral: diffusion has wrong shape");
    out.col(i + 1) = out.col(i) + gi * db.col(i);
  }
  return out;
}

void check_ensemble_shapes(std::size_t paths, std::size_t eta, std::size_t second, std::size_t xi,
                           const WienerEnsemble& noise, const char* what) {
  require(paths > 0, std::string(what) + ": candidate has no paths");
  require(eta == paths && second == paths, std::string(what) + ": candidate component sizes differ");
  require(xi >= paths && noise.paths() >= paths, std::string(what) + ": fewer samples than candidate paths");
}

}  // namespace

FunctionalReport sde_jhat(const OperatorSpec& op, std::span<const Vec> xi, const MatrixPath& G,
                          const WienerEnsemble& noise, const SdeCandidate& cand, std::span<const GraphPair> probe_graph) {
  const std::size_t paths = cand.x.size();
  check_ensemble_shapes(paths, cand.eta.size(), cand.k.size(), xi.size(), noise, "sde_jhat");
  require(static_cast<bool>(cand.g) && static_cast<bool>(G), "sde_jhat: g and G must be set");
  const TimeGrid& grid = noise.grid();
  std::vector<double> initial(paths), gap(paths), data(paths), total(paths);
  bool exact = true;
  for (std::size_t p = 0; p < paths; ++p) {
    const GridPath& x = cand.x[p];
    const BVPath& k = cand.k[p];
    require_same_grid(x.grid, grid, "sde_jhat");
    require_same_grid(k.grid, grid, "sde_jhat");
    const Mat db = noise.increments(p);
    const Mat mv = stochastic_integral(cand.g, grid, db, p, op.dim());
    const Mat kv = k.values();
    const double tv = k.total_variation();
    const double tol = 1e-9 * (1.0 + cand.eta[p].norm() + mv.colwise().norm().maxCoeff() + finite_or_zero(tv));
    for (Eigen::Index i = 0; i < kv.cols(); ++i) {
      const double defect = (x.values.col(i) + kv.col(i) - cand.eta[p] - mv.col(i)).norm();
      require(defect <= tol, "sde_jhat: path " + std::to_string(p) + " violates X + K = eta + int g dB");
    }
    initial[p] = 0.5 * (cand.eta[p] - xi[p]).squaredNorm();
    const PathGap pg = path_gap(op, probe_graph, x, k, "sde_jhat");
    exact = exact && pg.exact;
    gap[p] = pg.total;
    std::vector<double> g_terms(grid.steps());
    for (std::size_t i = 0; i < grid.steps(); ++i) {
      const double t = grid.times()[i];
      g_terms[i] = 0.5 * (cand.g(p, i, t) - G(p, i, t)).squaredNorm() * grid.dt(i);
    }
    data[p] = pairwise_sum(g_terms);
    total[p] = initial[p] + gap[p] + data[p];
  }
  FunctionalReport r;
  r.terms = {mc_term("initial", initial), mc_term("fitz_gap", gap), mc_term("diffusion", data)};
  const bool finite = std::all_of(gap.begin(), gap.end(), [](double v) { return std::isfinite(v); });
  const MeanEstimate t = estimate_mean(total);
  r.total = finite ? t.mean : kInf;
  r.standard_error = finite ? t.standard_error : 0.0;
  r.probes_used = exact ? 0 : probe_graph.size();
  return r;
}

// ---------------------------------------------------------------------------------------
// Stochastic variational inequality

SviCandidate svi_candidate(const SdeEnsemble& sol, const FieldCoefficients& coeffs) {
  require(sol.x.size() == sol.paths.size(), "svi_candidate: ensemble was solved without keep_paths");
  require(static_cast<bool>(coeffs.F) && static_cast<bool>(coeffs.G), "svi_candidate: F and G must be set");
  std::vector<BVPath> l;
  l.reserve(sol.x.size());
  for (std::size_t p = 0; p < sol.x.size(); ++p) {
    Mat inc = sol.k[p].increments;
    for (std::size_t i = 0; i < sol.grid.steps(); ++i) {
      inc.col(static_cast<Eigen::Index>(i)) -= coeffs.F(sol.grid.times()[i], sol.x[p].at(i)) * sol.grid.dt(i);
    }
    l.emplace_back(sol.grid, std::move(inc));
  }
  auto xs = std::make_shared<std::vector<GridPath>>(sol.x);
  auto G = coeffs.G;
  MatrixPath g = [xs, G](std::size_t path, std::size_t step, double t) { return G(t, (*xs)[path].at(step)); };
  return SviCandidate{ensemble_xi(sol), sol.x, std::move(l), std::move(g)};
}

FunctionalReport svi_jhat(const OperatorSpec& phi, const FieldCoefficients& coeffs, std::span<const Vec> xi,
                          const WienerEnsemble& noise, const SviCandidate& cand, const SviProbes& probes) {
  require(phi.is_subdifferential(), "svi_jhat: operator must be a subdifferential kind");
  require(static_cast<bool>(coeffs.F) && static_cast<bool>(coeffs.G) && static_cast<bool>(cand.g),
          "svi_jhat: F, G and g must be set");
  const std::size_t paths = cand.x.size();
  check_ensemble_shapes(paths, cand.eta.size(), cand.l.size(), xi.size(), noise, "svi_jhat");
  require(probes.include_candidate || !probes.processes.empty(), "svi_jhat: probe set is empty");
  const TimeGrid& grid = noise.grid();
  const std::size_t steps = grid.steps();

  std::vector<double> initial(paths);
  std::vector<double> phi_x(paths);
  std::vector<Mat> g_values(paths);
  bool finite_phi = true;
  for (std::size_t p = 0; p < paths; ++p) {
    const GridPath& x = cand.x[p];
    const BVPath& l = cand.l[p];
    require_same_grid(x.grid, grid, "svi_jhat");
    require_same_grid(l.grid, grid, "svi_jhat");
    const Mat db = noise.increments(p);
    const Mat mv = stochastic_integral(cand.g, grid, db, p, phi.dim());
    const Mat lv = l.values();
    const double tol = 1e-9 * (1.0 + cand.eta[p].norm() + mv.colwise().norm().maxCoeff() +
                               lv.colwise().norm().maxCoeff());
    for (Eigen::Index i = 0; i < lv.cols(); ++i) {
      const double defect = (x.values.col(i) + lv.col(i) - cand.eta[p] - mv.col(i)).norm();
      require(defect <= tol, "svi_jhat: path " + std::to_string(p) + " violates X + L = eta + int g dB");
    }
    initial[p] = 0.5 * (cand.eta[p] - xi[p]).squaredNorm();
    std::vector<double> phis(steps);
    for (std::size_t i = 0; i < steps; ++i) phis[i] = phi.potential(x.at(i + 1)) * grid.dt(i);
    phi_x[p] = pairwise_sum(phis);
    finite_phi = finite_phi && std::isfinite(phi_x[p]);
  }

  FunctionalReport r;
  r.terms.push_back(mc_term("initial", initial));
  r.terms.push_back(mc_term("phi_x", phi_x));
  if (!finite_phi) {
    r.total = kInf;
    return r;
  }

  auto probe_value = [&](const std::function<const GridPath&(std::size_t)>& probe) {
    std::vector<double> values(paths);
    std::vector<double> terms(steps);
    for (std::size_t p = 0; p < paths; ++p) {
      const GridPath& u = probe(p);
      const GridPath& x = cand.x[p];
      require_same_grid(u.grid, grid, "svi_jhat");
      require(u.dim() == phi.dim(), "svi_jhat: probe dimension mismatch");
      for (std::size_t i = 0; i < steps; ++i) {
        const double t = grid.times()[i];
        const double dt = grid.dt(i);
        const Vec ui = u.at(i);
        const Vec diff = u.at(i + 1) - x.at(i + 1);
        const double phi_u = phi.potential(u.at(i + 1));
        require(std::isfinite(phi_u), "svi_jhat: probe leaves Dom(phi) on path " + std::to_string(p));
        terms[i] = dt * diff.dot(coeffs.F(t, ui)) + diff.dot(cand.l[p].increment(i)) +
                   0.5 * dt * (cand.g(p, i, t) - coeffs.G(t, ui)).squaredNorm() -
                   dt * phi_u;
      }
      values[p] = initial[p] + pairwise_sum(terms) + phi_x[p];
    }
    return estimate_mean(values);
  };

  MeanEstimate best{-kInf, 0.0, 0};
  auto consider = [&](const MeanEstimate& e) {
    r.probe_values.push_back(e.mean);
    if (e.mean > best.mean) best = e;
  };
  if (probes.include_candidate) consider(probe_value([&](std::size_t p) -> const GridPath& { return cand.x[p]; }));
  for (const auto& process : probes.processes) {
    require(process.size() >= paths, "svi_jhat: probe process has fewer paths than the candidate");
    consider(probe_value([&](std::size_t p) -> const GridPath& { return process[p]; }));
  }
  r.total = best.mean;
  r.standard_error = best.standard_error;
  r.probes_used = r.probe_values.size();
  return r;
}

// ---------------------------------------------------------------------------------------
// Backward equations on the tree

namespace {

double tree_tolerance(const Mat& eta) { return 1e-10 * (1.0 + eta.cwiseAbs().maxCoeff()); }

void check_levels(const BinomialTree& tree, const Mat& eta, const TreeProcess& y, std::initializer_list<const TreeProcess*> inner,
                  Eigen::Index dim, const char* what) {
  const std::size_t n = tree.depth();
  require(eta.rows() == dim && eta.cols() == static_cast<Eigen::Index>(n + 1),
          std::string(what) + ": eta needs one value per leaf");
  require(y.levels() == n + 1 && y.dim() == dim, std::string(what) + ": Y must cover levels 0..n");
  for (const TreeProcess* p : inner) {
    require(p->levels() >= n && p->dim() == dim, std::string(what) + ": process must cover levels 0..n-1");
  }
}

double level_expectation(const BinomialTree& tree, std::size_t level, const std::function<double(std::size_t)>& f) {
  std::vector<double> terms(level + 1);
  for (std::size_t j = 0; j <= level; ++j) terms[j] = tree.probability(level, j) * f(j);
  return pairwise_sum(terms);
}

TreeProcess backward_values(const BinomialTree& tree, const Mat& eta, const TreeProcess& rate, double sign) {
  const std::size_t n = tree.depth();
  TreeProcess y(eta.rows(), n + 1);
  y.level(n) = eta;
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = 0; j <= i; ++j) y.set(i, j, y.conditional_mean(i, j) + sign * tree.dt() * rate.at(i, j));
  }
  return y;
}

}  // namespace

TreeCandidate tree_candidate(const BinomialTree& tree, const Mat& eta, const TreeProcess& H) {
  require(H.levels() >= tree.depth() && H.dim() == eta.rows(), "tree_candidate: H must cover levels 0..n-1");
  return TreeCandidate{eta, backward_values(tree, eta, H, -1.0), H};
}

FunctionalReport bsde_jhat(const OperatorSpec& op, const BinomialTree& tree, const Mat& xi, double R,
                           const TreeCandidate& cand, const BsdeProbes& probes) {
  const std::size_t n = tree.depth();
  const double dt = tree.dt();
  check_levels(tree, cand.eta, cand.Y, {&cand.H}, op.dim(), "bsde_jhat");
  require(xi.rows() == cand.eta.rows() && xi.cols() == cand.eta.cols(), "bsde_jhat: xi has wrong shape");
  const double tol = tree_tolerance(cand.eta) * (1.0 + dt * static_cast<double>(n));
  require((cand.Y.level(n) - cand.eta).cwiseAbs().maxCoeff() <= tol, "bsde_jhat: Y_n differs from eta");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const Vec defect = cand.Y.at(i, j) - cand.Y.conditional_mean(i, j) + dt * cand.H.at(i, j);
      require(defect.norm() <= tol * (1.0 + cand.H.at(i, j).norm()),
              "bsde_jhat: candidate is not of the form Y_i = E[Y_{i+1}] - dt H_i");
    }
  }
  auto leaf = [&](const Mat& v, std::size_t j) { return v.col(static_cast<Eigen::Index>(j)); };
  const double xi_energy = level_expectation(tree, n, [&](std::size_t j) { return leaf(xi, j).squaredNorm(); });
  require(xi_energy <= R * (1.0 + 1e-12), "bsde_jhat: E|xi|^2 exceeds R");

  const double initial =
      0.5 * level_expectation(tree, n, [&](std::size_t j) { return (leaf(cand.eta, j) - leaf(xi, j)).squaredNorm(); });
  std::vector<double> gaps;
  for (std::size_t i = 0; i < n; ++i) {
    gaps.push_back(dt * level_expectation(tree, i, [&](std::size_t j) {
      return point_gap(op, probes.probe_graph, cand.Y.at(i, j), cand.H.at(i, j));
    }));
  }
  const double gap = pairwise_sum(gaps);
  const double eta_energy = level_expectation(tree, n, [&](std::size_t j) { return leaf(cand.eta, j).squaredNorm(); });
  const double zeta = 0.5 * (eta_energy - xi_energy) + std::sqrt(R) * std::sqrt(2.0 * initial);

  FunctionalReport r;
  r.terms = {{"initial", initial, 0.0}, {"fitz_gap", gap, 0.0}, {"zeta", zeta, 0.0}};
  double probe_max = -kInf;
  for (const Mat& z : probes.zeta) {
    require(z.rows() == xi.rows() && z.cols() == xi.cols(), "bsde_jhat: zeta probe has wrong shape");
    const double energy = level_expectation(tree, n, [&](std::size_t j) { return leaf(z, j).squaredNorm(); });
    require(energy <= R * (1.0 + 1e-12), "bsde_jhat: zeta probe lies outside the ball E|zeta|^2 <= R");
    const double value = 0.5 * level_expectation(tree, n, [&](std::size_t j) {
      return (leaf(z, j) - leaf(cand.eta, j)).squaredNorm() - (leaf(z, j) - leaf(xi, j)).squaredNorm();
    });
    r.probe_values.push_back(value);
    probe_max = std::max(probe_max, value);
  }
  if (!probes.zeta.empty()) r.terms.push_back({"zeta_probe_max", probe_max, 0.0});
  r.total = std::isfinite(gap) ? initial + gap + zeta : kInf;
  r.probes_used = probes.zeta.size() + (has_closed_form(op) ? 0 : probes.probe_graph.size());
  return r;
}

BsviCandidate bsvi_candidate(const BinomialTree& tree, const Mat& eta, const TreeProcess& G) {
  require(G.levels() >= tree.depth() && G.dim() == eta.rows(), "bsvi_candidate: G must cover levels 0..n-1");
  BsviCandidate c{eta, G, backward_values(tree, eta, G, 1.0), TreeProcess(eta.rows(), tree.depth())};
  for (std::size_t i = 0; i < tree.depth(); ++i) {
    for (std::size_t j = 0; j <= i; ++j) c.Z.set(i, j, c.Y.martingale_difference(tree, i, j));
  }
  return c;
}

BsviCandidate bsvi_candidate(const BsviSolution& sol) {
  const std::size_t n = sol.tree.depth();
  TreeProcess g(sol.Y.dim(), n);
  for (std::size_t i = 0; i < n; ++i) g.level(i) = sol.drift.level(i) - sol.H.level(i);
  return BsviCandidate{sol.Y.level(n), g, sol.Y, sol.Z};
}

FunctionalReport bsvi_jhat(const OperatorSpec& phi, const BackwardDriver& F, const BinomialTree& tree, const Mat& xi,
                           const BsviCandidate& cand, const BsviProbes& probes) {
  require(phi.is_subdifferential(), "bsvi_jhat: operator must be a subdifferential kind");
  require(static_cast<bool>(F), "bsvi_jhat: driver must be set");
  require(probes.include_candidate || !probes.pairs.empty(), "bsvi_jhat: probe set is empty");
  const std::size_t n = tree.depth();
  const double dt = tree.dt();
  check_levels(tree, cand.eta, cand.Y, {&cand.G, &cand.Z}, phi.dim(), "bsvi_jhat");
  require(xi.rows() == cand.eta.rows() && xi.cols() == cand.eta.cols(), "bsvi_jhat: xi has wrong shape");
  const double tol = tree_tolerance(cand.eta) * (1.0 + dt * static_cast<double>(n));
  require((cand.Y.level(n) - cand.eta).cwiseAbs().maxCoeff() <= tol, "bsvi_jhat: Y_n differs from eta");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double scale = 1.0 + cand.G.at(i, j).norm() + cand.Z.at(i, j).norm();
      const Vec defect = cand.Y.at(i, j) - cand.Y.conditional_mean(i, j) - dt * cand.G.at(i, j);
      require(defect.norm() <= tol * scale, "bsvi_jhat: candidate is not of the form Y_i = E[Y_{i+1}] + dt G_i");
      const Vec zdef = cand.Z.at(i, j) - cand.Y.martingale_difference(tree, i, j);
      require(zdef.norm() <= tol * scale / tree.sqrt_dt(), "bsvi_jhat: Z is not the martingale difference of Y");
    }
  }
  auto leaf = [&](const Mat& v, std::size_t j) { return v.col(static_cast<Eigen::Index>(j)); };
  const double initial =
      0.5 * level_expectation(tree, n, [&](std::size_t j) { return (leaf(cand.eta, j) - leaf(xi, j)).squaredNorm(); });
  std::vector<double> phis;
  for (std::size_t i = 0; i < n; ++i) {
    phis.push_back(dt * level_expectation(tree, i, [&](std::size_t j) { return phi.potential(cand.Y.at(i, j)); }));
  }
  const double phi_y = pairwise_sum(phis);

  FunctionalReport r;
  r.terms = {{"initial", initial, 0.0}, {"phi_y", phi_y, 0.0}};
  if (!std::isfinite(phi_y)) {
    r.total = kInf;
    return r;
  }
  auto probe_value = [&](const TreeProcess& U, const TreeProcess& V) {
    require(U.levels() >= n && V.levels() >= n && U.dim() == phi.dim() && V.dim() == phi.dim(),
            "bsvi_jhat: probe must cover levels 0..n-1");
    std::vector<double> levels;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = tree.time(i);
      levels.push_back(dt * level_expectation(tree, i, [&](std::size_t j) {
        const Vec u = U.at(i, j);
        const Vec v = V.at(i, j);
        const double phi_u = phi.potential(u);
        require(std::isfinite(phi_u), "bsvi_jhat: probe U leaves Dom(phi)");
        return (u - cand.Y.at(i, j)).dot(F(t, u, v) - cand.G.at(i, j)) - 0.5 * (cand.Z.at(i, j) - v).squaredNorm() -
               phi_u;
      }));
    }
    return initial + pairwise_sum(levels) + phi_y;
  };
  double best = -kInf;
  auto consider = [&](double v) {
    r.probe_values.push_back(v);
    best = std::max(best, v);
  };
  if (probes.include_candidate) consider(probe_value(cand.Y, cand.Z));
  for (const BsviProbe& p : probes.pairs) consider(probe_value(p.U, p.V));
  r.total = best;
  r.probes_used = r.probe_values.size();
  return r;
}

// ---------------------------------------------------------------------------------------
// Convex combinations

namespace {

TreeProcess mix(const TreeProcess& a, const TreeProcess& b, double lambda) {
  require(a.levels() == b.levels() && a.dim() == b.dim(), "blend: tree processes differ in shape");
  TreeProcess out(a.dim(), a.levels());
  for (std::size_t i = 0; i < a.levels(); ++i) out.level(i) = lambda * a.level(i) + (1.0 - lambda) * b.level(i);
  return out;
}

GridPath mix(const GridPath& a, const GridPath& b, double lambda) {
  require_same_grid(a.grid, b.grid, "blend");
  return GridPath(a.grid, lambda * a.values + (1.0 - lambda) * b.values);
}

BVPath mix(const BVPath& a, const BVPath& b, double lambda) {
  require_same_grid(a.grid, b.grid, "blend");
  return BVPath(a.grid, lambda * a.increments + (1.0 - lambda) * b.increments);
}

template <class T>
std::vector<T> mix(const std::vector<T>& a, const std::vector<T>& b, double lambda) {
  require(a.size() == b.size(), "blend: ensembles differ in size");
  std::vector<T> out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if constexpr (std::is_same_v<T, Vec>) {
      out.push_back(lambda * a[i] + (1.0 - lambda) * b[i]);
    } else {
      out.push_back(mix(a[i], b[i], lambda));
    }
  }
  return out;
}

MatrixPath mix(const MatrixPath& a, const MatrixPath& b, double lambda) {
  return [a, b, lambda](std::size_t path, std::size_t step, double t) {
    return Mat(lambda * a(path, step, t) + (1.0 - lambda) * b(path, step, t));
  };
}

}  // namespace

GspCandidate blend(const GspCandidate& p, const GspCandidate& q, double lambda) {
  return GspCandidate{lambda * p.a + (1.0 - lambda) * q.a, mix(p.x, q.x, lambda), mix(p.k, q.k, lambda),
                      mix(p.mu, q.mu, lambda)};
}

SdeCandidate blend(const SdeCandidate& p, const SdeCandidate& q, double lambda) {
  return SdeCandidate{mix(p.eta, q.eta, lambda), mix(p.x, q.x, lambda), mix(p.k, q.k, lambda), mix(p.g, q.g, lambda)};
}

SviCandidate blend(const SviCandidate& p, const SviCandidate& q, double lambda) {
  return SviCandidate{mix(p.eta, q.eta, lambda), mix(p.x, q.x, lambda), mix(p.l, q.l, lambda), mix(p.g, q.g, lambda)};
}

TreeCandidate blend(const TreeCandidate& p, const TreeCandidate& q, double lambda) {
  return TreeCandidate{lambda * p.eta + (1.0 - lambda) * q.eta, mix(p.Y, q.Y, lambda), mix(p.H, q.H, lambda)};
}

BsviCandidate blend(const BsviCandidate& p, const BsviCandidate& q, double lambda) {
  return BsviCandidate{lambda * p.eta + (1.0 - lambda) * q.eta, mix(p.G, q.G, lambda), mix(p.Y, q.Y, lambda),
                       mix(p.Z, q.Z, lambda)};
}

}  // namespace mmfitz
