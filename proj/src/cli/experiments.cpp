#include "mmfitz/cli.hpp"

#include "mmfitz/backward_tree.hpp"
#include "mmfitz/fitzpatrick.hpp"
#include "mmfitz/forward_sde.hpp"
#include "mmfitz/gsp.hpp"
#include "mmfitz/variational.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace mmfitz::cli {

namespace {

// Stream ids for derive_seed; one per independent random consumer.
enum Stream : std::uint64_t { kPoints = 1, kSampling = 2, kProbes = 3, kDriver = 4, kNoise = 5, kTreeProbes = 6 };

template <class F>
auto as_config_error(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const PreconditionError& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

std::string csv(const std::function<void(std::ostream&)>& write) {
  std::ostringstream os;
  write(os);
  return os.str();
}

SamplingBox cube(Eigen::Index dim, double half_width) {
  return SamplingBox{Vec::Constant(dim, -half_width), Vec::Constant(dim, half_width)};
}

OperatorSpec read_operator(const Config& c) {
  return as_config_error("[operator] spec", [&] { return operator_from_text(c.get("operator", "spec")); });
}

TimeGrid read_grid(const Config& c) {
  const double horizon = c.real_or("grid", "horizon", 1.0);
  const std::uint64_t steps = c.count("grid", "steps");
  if (!(horizon > 0.0) || steps == 0) throw ConfigError("[grid]: horizon and steps must be positive");
  return TimeGrid::uniform(horizon, steps);
}

Vec read_dim_vector(const Config& c, const std::string& section, const std::string& key, Eigen::Index dim) {
  const Vec v = c.vector(section, key);
  if (v.size() != dim) throw ConfigError("[" + section + "] " + key + ": expected " + std::to_string(dim) + " components");
  return v;
}

// Driver m with m(0) = 0: linear, spiral, brownian, or a path CSV that also fixes the grid.
GridPath read_driver(const Config& c, Eigen::Index dim, std::uint64_t seed) {
  const std::string type = c.get("driver", "type");
  if (type == "file") {
    const std::string path = c.file("driver", "path");
    std::ifstream in(path);
    GridPath m = as_config_error("[driver] path", [&] { return read_path_csv(in); });
    if (m.dim() != dim) throw ConfigError("[driver] path: driver dimension differs from the operator");
    return m;
  }
  const TimeGrid grid = read_grid(c);
  const auto nodes = static_cast<Eigen::Index>(grid.nodes());
  Mat v = Mat::Zero(dim, nodes);
  if (type == "linear") {
    const Vec slope = read_dim_vector(c, "driver", "slope", dim);
    for (Eigen::Index i = 0; i < nodes; ++i) v.col(i) = slope * grid.times()[static_cast<std::size_t>(i)];
  } else if (type == "spiral") {
    if (dim != 2) throw ConfigError("[driver] type = spiral needs a 2-dimensional operator");
    const double scale = c.real_or("driver", "scale", 1.0);
    const double frequency = c.real_or("driver", "frequency", 6.0);
    for (Eigen::Index i = 0; i < nodes; ++i) {
      const double t = grid.times()[static_cast<std::size_t>(i)];
      v.col(i) << scale * t * std::cos(frequency * t), scale * t * std::sin(frequency * t);
    }
  } else if (type == "brownian") {
    const double scale = c.real_or("driver", "scale", 1.0);
    std::mt19937_64 rng(derive_seed(seed, kDriver));
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 1; i < nodes; ++i) {
      const double dt = grid.dt(static_cast<std::size_t>(i - 1));
      for (Eigen::Index r = 0; r < dim; ++r) v(r, i) = v(r, i - 1) + scale * std::sqrt(dt) * normal(rng);
    }
  } else {
    throw ConfigError("[driver] type: expected linear, spiral, brownian or file, got '" + type + "'");
  }
  return GridPath(grid, v);
}

struct ProbeSettings {
  std::size_t count = 200;
  double half_width = 3.0;
  double eps = 0.5;
};

ProbeSettings read_probes(const Config& c, const std::string& section) {
  ProbeSettings p;
  p.count = c.count_or(section, "probes", p.count);
  p.half_width = c.real_or(section, "half_width", p.half_width);
  p.eps = c.real_or(section, "eps", p.eps);
  if (p.count == 0 || !(p.half_width > 0.0) || !(p.eps > 0.0)) {
    throw ConfigError("[" + section + "]: probes, half_width and eps must be positive");
  }
  return p;
}

std::vector<GraphPair> probes_for(const OperatorSpec& op, const ProbeSettings& p, std::uint64_t seed) {
  return graph_sample(op, cube(op.dim(), p.half_width), p.count, p.eps, derive_seed(seed, kProbes));
}

// Sample set for kinds without a closed-form H.
std::optional<Sampling> sampling_for(const OperatorSpec& op, const ProbeSettings& p, std::uint64_t seed) {
  if (fitzpatrick_closed_form(op, Vec::Zero(op.dim()), Vec::Zero(op.dim()))) return std::nullopt;
  return Sampling{cube(op.dim(), p.half_width), 10 * p.count, derive_seed(seed, kSampling), p.eps};
}

void add_vector_metric(RunOutcome& out, const std::string& name, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out.metrics.emplace_back(name + "." + std::to_string(i + 1), v[i]);
}

void add_estimate(TextRecord& r, RunOutcome& out, const std::string& name, const MeanEstimate& e) {
  r.add(name, e.mean);
  r.add(name + ".standard_error", e.standard_error);
  out.metrics.emplace_back(name, e.mean);
  out.metrics.emplace_back(name + ".standard_error", e.standard_error);
}

// ---------------------------------------------------------------------------------------

RunOutcome fitz_check(const Config& c, std::uint64_t seed) {
  const OperatorSpec op = read_operator(c);
  const std::size_t points = c.count_or("fitz", "points", 1000);
  const std::size_t graph_points = c.count_or("fitz", "graph_samples", 1000);
  const ProbeSettings p = read_probes(c, "fitz");
  c.require_all_used();

  const auto sampling = sampling_for(op, p, seed);
  RunOutcome out;
  std::vector<GapRow> rows;
  std::mt19937_64 rng(derive_seed(seed, kPoints));
  std::uniform_real_distribution<double> unit(-p.half_width, p.half_width);
  auto draw = [&] {
    Vec v(op.dim());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = unit(rng);
    return v;
  };
  double min_random = kInf;
  for (std::size_t s = 0; s < points; ++s) {
    const Vec x = draw();
    const Vec xstar = draw();
    GapReport g = fitz_gap(op, x, xstar, sampling);
    if (g.exact) min_random = std::min(min_random, g.gap);
    rows.push_back({op.tag(), x, xstar, std::move(g)});
  }
  const auto graph = probes_for(op, p, seed);
  const std::vector<GraphPair> on_graph(graph.begin(), graph.begin() + static_cast<std::ptrdiff_t>(std::min(graph_points, graph.size())));
  double max_graph = -kInf;
  for (const GraphPair& z : on_graph) {
    GapReport g = fitz_gap(op, z.u, z.ustar, sampling);
    max_graph = std::max(max_graph, g.gap);
    rows.push_back({op.tag(), z.u, z.ustar, std::move(g)});
  }
  const double monotone = monotonicity_certificate(graph);

  out.files.emplace_back("gaps.csv", csv([&](std::ostream& os) { write_gap_csv(os, rows); }));
  TextRecord summary;
  summary.add("operator", to_text(op));
  summary.add("closed_form", !sampling.has_value());
  summary.add("min_random_gap", min_random);
  summary.add("max_graph_gap", max_graph);
  summary.add("monotonicity_certificate", monotone);
  out.files.emplace_back("summary.txt", to_text(summary));
  out.verdicts.push_back({"random_lower_bound", !(min_random < -1e-9)});
  out.verdicts.push_back({"graph_zero", max_graph <= 1e-8});
  out.verdicts.push_back({"monotone", monotone >= -1e-9});
  out.metrics = {{"min_random_gap", min_random}, {"max_graph_gap", max_graph}, {"monotonicity", monotone}};
  return out;
}

struct GspInputs {
  OperatorSpec op;
  Vec x0;
  GridPath m;
};

GspInputs read_gsp_inputs(const Config& c, std::uint64_t seed) {
  const OperatorSpec op = read_operator(c);
  const Vec x0 = read_dim_vector(c, "initial", "x0", op.dim());
  return GspInputs{op, x0, read_driver(c, op.dim(), seed)};
}

void add_path_outputs(RunOutcome& out, const GridPath& x, const BVPath& k) {
  out.files.emplace_back("x.csv", csv([&](std::ostream& os) { write_path_csv(os, x); }));
  out.files.emplace_back("k.csv", csv([&](std::ostream& os) { write_bv_csv(os, k); }));
}

RunOutcome gsp_solve(const Config& c, std::uint64_t seed) {
  const GspInputs in = read_gsp_inputs(c, seed);
  GspOptions options;
  options.scheme = as_config_error("[gsp] scheme", [&] { return gsp_scheme_from_string(c.get_or("gsp", "scheme", "catching_up")); });
  options.eps = c.real_or("gsp", "eps", options.eps);
  const ProbeSettings p = read_probes(c, "verify");
  const double gap_tolerance = c.real_or("tolerance", "gap", 1e-9);
  c.require_all_used();

  options.sampling = sampling_for(in.op, p, seed);
  const GspSolution sol = solve_gsp(in.op, in.x0, in.m, options);
  const auto probes = probes_for(in.op, p, seed);
  const GspVerification v = verify_gsp(in.op, in.x0, in.m, sol.x, sol.k, probes);

  RunOutcome out;
  add_path_outputs(out, sol.x, sol.k);
  out.files.emplace_back("diagnostics.txt", to_text(to_record(sol.diagnostics)));
  out.files.emplace_back("verification.txt", to_text(to_record(v)));
  const double step_gap = sol.diagnostics.max_step_gap.value_or(kInf);
  out.verdicts.push_back({"fitz_gap", step_gap <= gap_tolerance});
  out.verdicts.push_back({"verification", v.passed()});
  out.metrics = {{"max_dt", sol.diagnostics.max_dt},
                 {"sup_norm", sol.diagnostics.sup_norm},
                 {"total_variation", sol.diagnostics.total_variation},
                 {"max_step_gap", step_gap},
                 {"node_defect", sol.diagnostics.node_defect},
                 {"min_window", v.min_window.value}};
  add_vector_metric(out, "x_T", sol.x.at(sol.x.grid.nodes() - 1));
  return out;
}

RunOutcome gsp_minimize(const Config& c, std::uint64_t seed) {
  const GspInputs in = read_gsp_inputs(c, seed);
  if (!in.op.is_normal_cone()) throw ConfigError("[operator] spec: gsp-minimize needs a normal-cone kind");
  MinimizeOptions options;
  const std::string method = c.get_or("minimize", "method", "admm");
  if (method == "admm") options.method = MinimizeMethod::admm;
  else if (method == "subgradient") options.method = MinimizeMethod::subgradient;
  else throw ConfigError("[minimize] method: expected admm or subgradient");
  const std::string rule = c.get_or("minimize", "rule", "polyak");
  if (rule == "polyak") options.rule = StepRule::polyak;
  else if (rule == "diminishing") options.rule = StepRule::diminishing;
  else throw ConfigError("[minimize] rule: expected polyak or diminishing");
  options.iterations = c.count_or("minimize", "iterations", options.iterations);
  options.penalty = c.real_or("minimize", "penalty", options.penalty);
  options.step = c.real_or("minimize", "step", options.step);
  options.tolerance = c.real_or("minimize", "tolerance", options.tolerance);
  const double k_tolerance = c.real_or("tolerance", "k_distance", 1e-4);
  c.require_all_used();

  const MinimizeResult result = minimize_gsp_jhat(in.op, in.x0, in.m, options);
  const GspSolution sol = solve_gsp(in.op, in.x0, in.m);
  const double k_distance = (result.candidate.k.values() - sol.k.values()).cwiseAbs().maxCoeff();
  FunctionalParams params = default_gsp_params(sol.k, std::vector<GridPath>{in.m});
  params.R = std::max(params.R, 2.0 * result.candidate.k.total_variation());
  const FunctionalReport jhat = gsp_jhat(in.op, in.x0, in.m, params, result.candidate);

  RunOutcome out;
  out.files.emplace_back("trace.csv", csv([&](std::ostream& os) { write_trace_csv(os, result.trace); }));
  add_path_outputs(out, result.candidate.x, result.candidate.k);
  out.files.emplace_back("report.txt", to_text(jhat));
  out.verdicts.push_back({"converged", result.converged});
  out.verdicts.push_back({"k_agreement", k_distance <= k_tolerance});
  out.metrics = {{"max_dt", in.m.grid.max_dt()},
                 {"objective", result.objective},
                 {"jhat", jhat.total},
                 {"k_distance", k_distance},
                 {"iterations", static_cast<double>(result.trace.size() - 1)}};
  return out;
}

struct EnsembleInputs {
  OperatorSpec op;
  Vec xi;
  TimeGrid grid;
  Mat diffusion;
  std::size_t paths = 0;
  std::size_t dumps = 0;
  ProbeSettings probes;
};

EnsembleInputs read_ensemble_inputs(const Config& c, const std::string& section) {
  EnsembleInputs in{read_operator(c), {}, {}, {}, 0, 0, {}};
  in.xi = read_dim_vector(c, "initial", "xi", in.op.dim());
  in.grid = read_grid(c);
  in.diffusion = c.matrix("diffusion");
  if (in.diffusion.rows() != in.op.dim()) throw ConfigError("[diffusion]: rows must equal the operator dimension");
  in.paths = c.count(section, "paths");
  in.dumps = c.count_or(section, "dump_paths", 0);
  if (in.paths == 0 || in.dumps > in.paths) throw ConfigError("[" + section + "]: need paths > 0 and dump_paths <= paths");
  in.probes = read_probes(c, "verify");
  return in;
}

void add_ensemble_outputs(RunOutcome& out, const SdeEnsemble& sol, std::size_t dumps) {
  out.files.emplace_back("ensemble.csv", csv([&](std::ostream& os) { write_ensemble_csv(os, sol); }));
  std::vector<double> terminal_sq(sol.paths.size());
  for (std::size_t p = 0; p < sol.paths.size(); ++p) terminal_sq[p] = sol.paths[p].x_terminal.squaredNorm();
  TextRecord moments;
  moments.add("paths", std::to_string(sol.paths.size()));
  add_estimate(moments, out, "sup_x_squared", sol.sup_x_squared);
  add_estimate(moments, out, "tv_k", sol.tv_k);
  add_estimate(moments, out, "terminal_second_moment", estimate_mean(terminal_sq));
  moments.add("max_node_defect", sol.max_node_defect);
  moments.add("max_fitz_gap", sol.max_fitz_gap);
  moments.add("gap_exact", sol.gap_exact);
  out.files.emplace_back("moments.txt", to_text(moments));
  out.metrics.emplace_back("max_dt", sol.grid.max_dt());
  out.metrics.emplace_back("max_fitz_gap", sol.max_fitz_gap);
  for (std::size_t p = 0; p < dumps; ++p) {
    char name[32];
    std::snprintf(name, sizeof name, "path_%05zu", p);
    out.files.emplace_back(std::string(name) + "_x.csv", csv([&](std::ostream& os) { write_path_csv(os, sol.x[p]); }));
    out.files.emplace_back(std::string(name) + "_k.csv", csv([&](std::ostream& os) { write_bv_csv(os, sol.k[p]); }));
  }
}

RunOutcome sde_run(const Config& c, std::uint64_t seed) {
  const EnsembleInputs in = read_ensemble_inputs(c, "sde");
  const double gap_tolerance = c.real_or("tolerance", "gap", 1e-9);
  c.require_all_used();

  const WienerEnsemble noise(in.grid, in.diffusion.cols(), in.paths, derive_seed(seed, kNoise));
  SdeOptions options;
  options.keep_paths = in.dumps > 0;
  options.sampling = sampling_for(in.op, in.probes, seed);
  const SdeEnsemble sol = solve_sde_additive(in.op, constant_xi(in.xi), constant_matrix(in.diffusion), noise, options);
  RunOutcome out;
  add_ensemble_outputs(out, sol, in.dumps);
  out.verdicts.push_back({"fitz_gap", sol.max_fitz_gap <= gap_tolerance});
  out.verdicts.push_back({"node_identity", sol.max_node_defect <= 1e-10});
  return out;
}

RunOutcome svi_run(const Config& c, std::uint64_t seed) {
  EnsembleInputs in = read_ensemble_inputs(c, "svi");
  if (!in.op.is_subdifferential()) throw ConfigError("[operator] spec: svi-run needs a subdifferential kind");
  const Mat drift = c.matrix("drift");
  const Vec offset = c.has("drift", "offset") ? read_dim_vector(c, "drift", "offset", in.op.dim()) : Vec::Zero(in.op.dim());
  if (drift.rows() != in.op.dim() || drift.cols() != in.op.dim()) throw ConfigError("[drift]: matrix must be d x d");
  const bool dissipative = c.flag_or("svi", "dissipative", false);
  const double gap_tolerance = c.real_or("tolerance", "gap", 1e-9);
  c.require_all_used();

  FieldCoefficients coeffs;
  coeffs.F = [drift, offset](double, const Vec& x) { return Vec(drift * x + offset); };
  const Mat g = in.diffusion;
  coeffs.G = [g](double, const Vec&) { return g; };
  coeffs.dissipative = dissipative;
  const WienerEnsemble noise(in.grid, in.diffusion.cols(), in.paths, derive_seed(seed, kNoise));
  SdeOptions options;
  options.keep_paths = true;
  options.sampling = sampling_for(in.op, in.probes, seed);
  options.check_seed = derive_seed(seed, kSampling);
  const SdeEnsemble sol = solve_svi(in.op, coeffs, constant_xi(in.xi), noise, options);
  const auto probes = probes_for(in.op, in.probes, seed);

  SviVerification worst;
  worst.min_window_a1.value = kInf;
  worst.min_window_a2.value = kInf;
  std::size_t failed = 0;
  for (std::size_t p = 0; p < sol.x.size(); ++p) {
    const SviVerification v = verify_svi(in.op, sol.x[p], sol.k[p], probes);
    if (!v.passed()) ++failed;
    if (v.min_window_a1.value < worst.min_window_a1.value) worst.min_window_a1 = v.min_window_a1;
    if (v.min_window_a2.value < worst.min_window_a2.value) worst.min_window_a2 = v.min_window_a2;
    worst.tolerance = std::max(worst.tolerance, v.tolerance);
    worst.path_gap = std::max(worst.path_gap, v.path_gap);
    worst.path_gap_exact = worst.path_gap_exact && v.path_gap_exact;
  }
  worst.a1_ok = worst.a2_ok = failed == 0;

  RunOutcome out;
  add_ensemble_outputs(out, sol, in.dumps);
  TextRecord verification = to_record(worst);
  verification.add("paths_failed", std::to_string(failed));
  out.files.emplace_back("verification.txt", to_text(verification));
  out.verdicts.push_back({"pathwise_conditions", failed == 0});
  out.verdicts.push_back({"fitz_gap", sol.max_fitz_gap <= gap_tolerance});
  out.metrics.emplace_back("paths_failed", static_cast<double>(failed));
  return out;
}

RunOutcome bsde_run(const Config& c, std::uint64_t seed) {
  const OperatorSpec phi = read_operator(c);
  if (!phi.is_subdifferential()) throw ConfigError("[operator] spec: bsde-run needs a subdifferential kind");
  const std::uint64_t depth = c.count("tree", "depth");
  const double horizon = c.real_or("tree", "horizon", 1.0);
  if (depth == 0 || !(horizon > 0.0)) throw ConfigError("[tree]: depth and horizon must be positive");
  const BinomialTree tree(depth, horizon);
  const Eigen::Index dim = phi.dim();
  const double ay = c.real_or("driver", "y", 0.0);
  const double az = c.real_or("driver", "z", 0.0);
  const Vec b = c.has("driver", "constant") ? read_dim_vector(c, "driver", "constant", dim) : Vec::Zero(dim);

  LeafMap xi;
  if (c.has("payoff", "expression") == c.has("payoff", "table")) {
    throw ConfigError("[payoff]: give exactly one of expression or table");
  }
  if (c.has("payoff", "expression")) {
    std::vector<Expression> parts;
    std::istringstream is(c.get("payoff", "expression"));
    for (std::string piece; std::getline(is, piece, ';');) parts.push_back(Expression::parse(piece));
    if (parts.size() != 1 && parts.size() != static_cast<std::size_t>(dim)) {
      throw ConfigError("[payoff] expression: need one expression or one per component");
    }
    xi = [parts, dim](std::size_t, double w) {
      Vec v(dim);
      for (Eigen::Index r = 0; r < dim; ++r) v[r] = parts[parts.size() == 1 ? 0 : static_cast<std::size_t>(r)](w);
      return v;
    };
  } else {
    const Vec table = c.vector("payoff", "table");
    if (table.size() != dim * static_cast<Eigen::Index>(depth + 1)) {
      throw ConfigError("[payoff] table: need dim x (depth + 1) values, leaf-major");
    }
    xi = [table, dim](std::size_t j, double) { return Vec(table.segment(static_cast<Eigen::Index>(j) * dim, dim)); };
  }
  const std::string scheme = c.get_or("bsde", "scheme", "implicit");
  const double eps = c.real_or("bsde", "eps", 1e-2);
  if (scheme != "implicit" && scheme != "penalized") throw ConfigError("[bsde] scheme: expected implicit or penalized");
  const std::size_t probe_count = c.count_or("bsde", "probes", 20);
  const double gap_tolerance = c.real_or("tolerance", "gap", 1e-10);
  const double functional_tolerance = c.real_or("tolerance", "functional", 1e-8);
  c.require_all_used();

  const BackwardDriver F = [ay, az, b](double, const Vec& y, const Vec& z) { return Vec(ay * y + az * z + b); };
  const BsviSolution sol = scheme == "implicit" ? solve_bsvi_tree(phi, F, xi, tree)
                                                : solve_bsvi_tree_penalized(phi, F, xi, tree, eps);
  BsviProbes probes;
  std::mt19937_64 rng(derive_seed(seed, kTreeProbes));
  std::uniform_real_distribution<double> unit(-2.0, 2.0);
  for (std::size_t s = 0; s < probe_count; ++s) {
    BsviProbe probe{TreeProcess(dim, depth), TreeProcess(dim, depth)};
    for (std::size_t i = 0; i < depth; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        Vec u(dim), v(dim);
        for (Eigen::Index r = 0; r < dim; ++r) {
          u[r] = unit(rng);
          v[r] = unit(rng);
        }
        probe.U.set(i, j, resolvent(phi, 1.0, u));
        probe.V.set(i, j, v);
      }
    }
    probes.pairs.push_back(std::move(probe));
  }
  const Mat leaves = leaf_values(tree, xi);
  const FunctionalReport report = bsvi_jhat(phi, F, tree, leaves, bsvi_candidate(sol), probes);

  RunOutcome out;
  out.files.emplace_back("tree.csv", csv([&](std::ostream& os) { write_tree_csv(os, sol); }));
  out.files.emplace_back("report.txt", to_text(report));
  TextRecord summary;
  summary.add("scheme", scheme);
  summary.add("y0", format_vector(sol.Y.at(0, 0)));
  summary.add("max_gap", sol.max_gap);
  summary.add("max_node_defect", sol.max_node_defect);
  summary.add("terminal_defect", sol.terminal_defect);
  out.files.emplace_back("summary.txt", to_text(summary));
  out.verdicts.push_back({"inclusion", sol.max_gap <= gap_tolerance});
  out.verdicts.push_back({"node_identity", sol.max_node_defect <= 1e-12});
  out.verdicts.push_back({"functional_zero", report.total <= functional_tolerance});
  out.metrics = {{"max_dt", tree.dt()}, {"max_gap", sol.max_gap}, {"functional", report.total}};
  add_vector_metric(out, "y0", sol.Y.at(0, 0));
  return out;
}

RunOutcome verify(const Config& c, std::uint64_t seed) {
  const GspInputs in = read_gsp_inputs(c, seed);
  std::ifstream xs(c.file("candidate", "x"));
  std::ifstream ks(c.file("candidate", "k"));
  const ProbeSettings p = read_probes(c, "verify");
  c.require_all_used();
  const GridPath x = as_config_error("[candidate] x", [&] { return read_path_csv(xs); });
  const BVPath k = as_config_error("[candidate] k", [&] { return read_bv_csv(ks); });
  if (!(x.grid == in.m.grid) || !(k.grid == in.m.grid)) throw ConfigError("[candidate]: grids differ from the driver grid");
  if (x.dim() != in.op.dim() || k.dim() != in.op.dim()) throw ConfigError("[candidate]: dimension differs from the operator");

  const GspVerification v = verify_gsp(in.op, in.x0, in.m, x, k, probes_for(in.op, p, seed));
  RunOutcome out;
  out.files.emplace_back("verification.txt", to_text(to_record(v)));
  out.verdicts.push_back({"node_identity", v.node_ok});
  out.verdicts.push_back({"domain", v.domain_ok});
  out.verdicts.push_back({"integral_inequality", v.inequality_ok});
  out.verdicts.push_back({"fitz_gap", v.gap_ok});
  out.metrics = {{"max_dt", in.m.grid.max_dt()},
                 {"node_defect", v.node_defect},
                 {"domain_defect", v.domain_defect},
                 {"min_window", v.min_window.value},
                 {"path_gap", v.path_gap}};
  if (!v.inequality_ok) {
    out.notes.push_back("negative witness: probe " + std::to_string(v.min_window.probe) + ", steps [" +
                        std::to_string(v.min_window.first_step) + ", " + std::to_string(v.min_window.last_step) +
                        "), value " + format_real(v.min_window.value));
  }
  return out;
}

}  // namespace

bool RunOutcome::passed() const {
  for (const Verdict& v : verdicts) {
    if (!v.passed) return false;
  }
  return true;
}

RunOutcome execute(const Config& config, std::uint64_t seed) {
  static const std::map<std::string, RunOutcome (*)(const Config&, std::uint64_t)> kinds{
      {"fitz-check", fitz_check}, {"gsp-solve", gsp_solve}, {"gsp-minimize", gsp_minimize}, {"sde-run", sde_run},
      {"svi-run", svi_run},       {"bsde-run", bsde_run},   {"verify", verify}};
  const std::string kind = config.get("experiment", "kind");
  // Seed and output directory belong to the runner; mark them read here.
  for (const char* key : {"seed", "out"}) {
    if (config.has("experiment", key)) (void)config.get("experiment", key);
  }
  const auto it = kinds.find(kind);
  if (it == kinds.end()) throw ConfigError("[experiment] kind: unknown experiment '" + kind + "'");
  RunOutcome out = it->second(config, seed);
  out.kind = kind;
  return out;
}

}  // namespace mmfitz::cli
