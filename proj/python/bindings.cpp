#include "mmfitz/cli.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;

namespace {

using namespace mmfitz;

py::dict gap_dict(const GapReport& g) {
  py::dict d;
  d["gap"] = g.gap;
  d["exact"] = g.exact;
  if (g.witness) d["witness"] = py::make_tuple(g.witness->u, g.witness->ustar);
  else d["witness"] = py::none();
  return d;
}

py::dict diagnostics_dict(const GspDiagnostics& diag) {
  py::dict d;
  d["sup_norm"] = diag.sup_norm;
  d["total_variation"] = diag.total_variation;
  d["max_step_gap"] = diag.max_step_gap ? py::cast(*diag.max_step_gap) : py::none();
  d["gap_exact"] = diag.gap_exact;
  d["node_defect"] = diag.node_defect;
  d["max_dt"] = diag.max_dt;
  return d;
}

py::list tree_levels(const TreeProcess& p) {
  py::list out;
  for (std::size_t i = 0; i < p.levels(); ++i) out.append(Mat(p.level(i)));
  return out;
}

GridPath driver(const std::vector<double>& times, const Mat& values) { return GridPath(TimeGrid(times), values); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Maximal monotone operators, Fitzpatrick gaps, Skorohod problems and variational inequalities";
  m.attr("__version__") = cli::kVersion;

  py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);
  py::register_exception<cli::ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<OperatorSpec>(m, "Operator")
      .def(py::init([](const std::string& text) { return operator_from_text(text); }), py::arg("spec"),
           "Operator from its one-line text form, e.g. 'NormalConeBox lo=0 hi=inf'.")
      .def_property_readonly("dim", &OperatorSpec::dim)
      .def_property_readonly("tag", &OperatorSpec::tag)
      .def("is_normal_cone", &OperatorSpec::is_normal_cone)
      .def("is_subdifferential", &OperatorSpec::is_subdifferential)
      .def("potential", &OperatorSpec::potential, py::arg("x"))
      .def("domain_distance", &OperatorSpec::domain_distance, py::arg("x"))
      .def("__str__", [](const OperatorSpec& op) { return to_text(op); })
      .def("__repr__", [](const OperatorSpec& op) { return "Operator('" + to_text(op) + "')"; });

  m.def("resolvent", [](const OperatorSpec& op, double eps, const Vec& x) { return resolvent(op, eps, x); },
        py::arg("op"), py::arg("eps"), py::arg("x"), "(I + eps A)^{-1} x");
  m.def(
      "yosida",
      [](const OperatorSpec& op, double eps, const Vec& x) {
        const YosidaPair p = yosida(op, eps, x);
        return py::make_tuple(p.jx, p.ax);
      },
      py::arg("op"), py::arg("eps"), py::arg("x"), "(J_eps x, A_eps x), a point of the graph");
  m.def(
      "graph_sample",
      [](const OperatorSpec& op, double half_width, std::size_t n, double eps, std::uint64_t seed) {
        const Vec hw = Vec::Constant(op.dim(), half_width);
        const auto pairs = graph_sample(op, SamplingBox{-hw, hw}, n, eps, seed);
        py::list out;
        for (const GraphPair& p : pairs) out.append(py::make_tuple(p.u, p.ustar));
        return out;
      },
      py::arg("op"), py::arg("half_width"), py::arg("n"), py::arg("eps"), py::arg("seed"));
  m.def(
      "monotonicity_certificate",
      [](const std::vector<std::pair<Vec, Vec>>& pairs) {
        std::vector<GraphPair> g;
        for (const auto& [u, ustar] : pairs) g.push_back({u, ustar});
        return monotonicity_certificate(g);
      },
      py::arg("pairs"));
  m.def("fitzpatrick_closed_form", &fitzpatrick_closed_form, py::arg("op"), py::arg("x"), py::arg("xstar"));
  m.def(
      "fitz_gap", [](const OperatorSpec& op, const Vec& x, const Vec& xstar) { return gap_dict(fitz_gap(op, x, xstar)); },
      py::arg("op"), py::arg("x"), py::arg("xstar"), "H(x, x*) - <x, x*> with its exactness flag and witness");

  m.def(
      "solve_gsp",
      [](const OperatorSpec& op, const Vec& x0, const std::vector<double>& times, const Mat& m_values,
         const std::string& scheme, double eps) {
        GspOptions options;
        options.scheme = gsp_scheme_from_string(scheme);
        options.eps = eps;
        const GspSolution sol = solve_gsp(op, x0, driver(times, m_values), options);
        return py::make_tuple(sol.x.values, sol.k.values(), diagnostics_dict(sol.diagnostics));
      },
      py::arg("op"), py::arg("x0"), py::arg("times"), py::arg("m"), py::arg("scheme") = "catching_up",
      py::arg("eps") = 1e-2, "Returns (x, k, diagnostics) with x and k as dim x nodes arrays.");
  m.def(
      "skorohod_1d_oracle",
      [](double x0, const std::vector<double>& times, const Mat& m_values) {
        const GspSolution sol = skorohod_1d_oracle(x0, driver(times, m_values));
        return py::make_tuple(sol.x.values, sol.k.values());
      },
      py::arg("x0"), py::arg("times"), py::arg("m"));
  m.def(
      "verify_gsp",
      [](const OperatorSpec& op, const Vec& x0, const std::vector<double>& times, const Mat& m_values, const Mat& x,
         const Mat& k, std::size_t probes, std::uint64_t seed) {
        const TimeGrid grid(times);
        const Vec hw = Vec::Constant(op.dim(), 3.0);
        const auto pairs = graph_sample(op, SamplingBox{-hw, hw}, probes, 0.5, seed);
        const GspVerification v = verify_gsp(op, x0, GridPath(grid, m_values), GridPath(grid, x),
                                             BVPath::from_values(grid, k), pairs);
        py::dict d;
        d["passed"] = v.passed();
        d["node_defect"] = v.node_defect;
        d["domain_defect"] = v.domain_defect;
        d["min_window"] = v.min_window.value;
        d["path_gap"] = v.path_gap;
        return d;
      },
      py::arg("op"), py::arg("x0"), py::arg("times"), py::arg("m"), py::arg("x"), py::arg("k"),
      py::arg("probes") = 200, py::arg("seed") = 0, "Checks a candidate (x, k) given by node values.");

  m.def(
      "solve_bsvi_tree",
      [](const OperatorSpec& phi, std::size_t depth, double horizon, const Mat& leaves, double decay) {
        const BinomialTree tree(depth, horizon);
        require(leaves.rows() == phi.dim() && leaves.cols() == static_cast<Eigen::Index>(depth + 1),
                "solve_bsvi_tree: leaves must be dim x (depth + 1)");
        const LeafMap xi = [leaves](std::size_t j, double) { return Vec(leaves.col(static_cast<Eigen::Index>(j))); };
        const BackwardDriver F = [decay](double, const Vec& y, const Vec&) { return Vec(-decay * y); };
        const BsviSolution sol = solve_bsvi_tree(phi, F, xi, tree);
        py::dict d;
        d["Y"] = tree_levels(sol.Y);
        d["Z"] = tree_levels(sol.Z);
        d["H"] = tree_levels(sol.H);
        d["max_gap"] = sol.max_gap;
        d["max_node_defect"] = sol.max_node_defect;
        return d;
      },
      py::arg("phi"), py::arg("depth"), py::arg("horizon"), py::arg("leaves"), py::arg("decay") = 0.0,
      "Backward inequality on a binomial tree with driver F(t, y, z) = -decay y; leaves are dim x (depth + 1).");
  m.def(
      "reconstruction_defect",
      [](std::size_t depth, double horizon, const Mat& eta) {
        const BinomialTree tree(depth, horizon);
        return reconstruction_defect(tree, eta, martingale_representation(tree, eta));
      },
      py::arg("depth"), py::arg("horizon"), py::arg("eta"));

  m.def("ks_statistic", &ks_statistic, py::arg("a"), py::arg("b"));
  m.def("ks_critical_value", &ks_critical_value, py::arg("n"), py::arg("m"), py::arg("alpha"));

  m.def(
      "run_experiment",
      [](const std::string& config_text, std::uint64_t seed, const std::string& base_dir) {
        const cli::RunOutcome r = cli::execute(cli::Config::parse(config_text, base_dir), seed);
        py::dict d;
        d["kind"] = r.kind;
        d["files"] = r.files;
        py::dict verdicts;
        for (const cli::Verdict& v : r.verdicts) verdicts[py::str(v.name)] = v.passed;
        d["verdicts"] = verdicts;
        py::dict metrics;
        for (const auto& [name, value] : r.metrics) metrics[py::str(name)] = value;
        d["metrics"] = metrics;
        d["passed"] = r.passed();
        return d;
      },
      py::arg("config"), py::arg("seed"), py::arg("base_dir") = ".",
      "Runs a CLI experiment in memory; returns kind, files, verdicts, metrics and passed.");
}
