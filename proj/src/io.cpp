#include "mmfitz/io.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace mmfitz {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::size_t parse_count(std::string_view text) {
  std::size_t v = 0;
  const auto t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  require(ec == std::errc() && ptr == t.data() + t.size() && !t.empty(),
          "parse: expected a nonnegative integer, got '" + std::string(text) + "'");
  return v;
}

std::string format_matrix_row_major(const Mat& m) {
  std::string out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!out.empty()) out += ',';
      out += format_real(m(r, c));
    }
  }
  return out;
}

Mat parse_matrix_row_major(std::string_view text, std::size_t rows) {
  const Vec flat = parse_vector(text);
  require(rows > 0 && flat.size() % static_cast<Eigen::Index>(rows) == 0, "operator text: matrix size mismatch");
  const auto r = static_cast<Eigen::Index>(rows);
  const Eigen::Index c = flat.size() / r;
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = flat[i * c + j];
  }
  return m;
}

using Params = std::map<std::string, std::string, std::less<>>;

const std::string& param(const Params& p, const std::string& key) {
  const auto it = p.find(key);
  require(it != p.end(), "operator text: missing parameter '" + key + "'");
  return it->second;
}

void part_fields(const SubdiffPart& part, const std::string& prefix, std::vector<std::string>& out) {
  std::visit(overloaded{[&](const NormalConeBox& b) {
                          out.push_back(prefix + "lo=" + format_vector(b.lo));
                          out.push_back(prefix + "hi=" + format_vector(b.hi));
                        },
                        [&](const NormalConeBall& b) {
                          out.push_back(prefix + "center=" + format_vector(b.center));
                          out.push_back(prefix + "radius=" + format_real(b.radius));
                        },
                        [&](const SubdiffAbsSum& s) { out.push_back(prefix + "weights=" + format_vector(s.weights)); },
                        [&](const SubdiffIndicatorInterval& s) {
                          out.push_back(prefix + "a=" + format_vector(s.a));
                          out.push_back(prefix + "b=" + format_vector(s.b));
                        }},
             part);
}

std::string part_tag(const SubdiffPart& part) {
  return std::visit(overloaded{[](const NormalConeBox&) { return std::string("NormalConeBox"); },
                               [](const NormalConeBall&) { return std::string("NormalConeBall"); },
                               [](const SubdiffAbsSum&) { return std::string("SubdiffAbsSum"); },
                               [](const SubdiffIndicatorInterval&) { return std::string("SubdiffIndicatorInterval"); }},
                    part);
}

SubdiffPart parse_part(const std::string& tag, const Params& p, const std::string& prefix) {
  if (tag == "NormalConeBox") return NormalConeBox{parse_vector(param(p, prefix + "lo")), parse_vector(param(p, prefix + "hi"))};
  if (tag == "NormalConeBall") {
    return NormalConeBall{parse_vector(param(p, prefix + "center")), parse_real(param(p, prefix + "radius"))};
  }
  if (tag == "SubdiffAbsSum") return SubdiffAbsSum{parse_vector(param(p, prefix + "weights"))};
  if (tag == "SubdiffIndicatorInterval") {
    return SubdiffIndicatorInterval{parse_vector(param(p, prefix + "a")), parse_vector(param(p, prefix + "b"))};
  }
  throw PreconditionError("operator text: unknown kind '" + tag + "'");
}

std::string csv_vector(const Vec& v) { return format_vector(v, ';'); }

}  // namespace

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

double parse_real(std::string_view text) {
  const auto t = trim(text);
  if (t == "inf" || t == "+inf") return kInf;
  if (t == "-inf") return -kInf;
  if (t == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* begin = t.data() + (!t.empty() && t.front() == '+' ? 1 : 0);
  const auto [ptr, ec] = std::from_chars(begin, t.data() + t.size(), v);
  require(!t.empty() && ec == std::errc() && ptr == t.data() + t.size(),
          "parse: expected a real number, got '" + std::string(text) + "'");
  return v;
}

std::string format_vector(const Vec& v, char sep) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += sep;
    out += format_real(v[i]);
  }
  return out;
}

Vec parse_vector(std::string_view text, char sep) {
  const auto parts = split(trim(text), sep);
  Vec v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) v[static_cast<Eigen::Index>(i)] = parse_real(parts[i]);
  return v;
}

std::string to_text(const OperatorSpec& op) {
  std::vector<std::string> fields{op.tag()};
  std::visit(overloaded{[&](const NormalConeBox& b) { part_fields(b, "", fields); },
                        [&](const NormalConeBall& b) { part_fields(b, "", fields); },
                        [&](const SubdiffAbsSum& s) { part_fields(s, "", fields); },
                        [&](const SubdiffIndicatorInterval& s) { part_fields(s, "", fields); },
                        [&](const LinearMonotone& l) {
                          fields.push_back("rows=" + std::to_string(l.matrix.rows()));
                          fields.push_back("matrix=" + format_matrix_row_major(l.matrix));
                        },
                        [&](const ScaledIdentity& s) {
                          fields.push_back("c=" + format_real(s.c));
                          fields.push_back("dim=" + std::to_string(s.dim));
                        },
                        [&](const SumOperator& s) {
                          fields.push_back("rows=" + std::to_string(s.linear.matrix.rows()));
                          fields.push_back("matrix=" + format_matrix_row_major(s.linear.matrix));
                          fields.push_back("part=" + part_tag(s.part));
                          part_fields(s.part, "part.", fields);
                        }},
             op.kind());
  std::string out;
  for (const std::string& f : fields) {
    if (!out.empty()) out += ' ';
    out += f;
  }
  return out;
}

OperatorSpec operator_from_text(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string tag;
  require(static_cast<bool>(is >> tag), "operator text: empty record");
  Params p;
  for (std::string token; is >> token;) {
    const auto eq = token.find('=');
    require(eq != std::string::npos && eq > 0, "operator text: expected key=value, got '" + token + "'");
    require(p.emplace(token.substr(0, eq), token.substr(eq + 1)).second, "operator text: repeated key in '" + token + "'");
  }
  if (tag == "LinearMonotone") return OperatorSpec::linear(parse_matrix_row_major(param(p, "matrix"), parse_count(param(p, "rows"))));
  if (tag == "ScaledIdentity") {
    return OperatorSpec::scaled_identity(parse_real(param(p, "c")), static_cast<Eigen::Index>(parse_count(param(p, "dim"))));
  }
  if (tag == "Sum") {
    const LinearMonotone linear{parse_matrix_row_major(param(p, "matrix"), parse_count(param(p, "rows")))};
    return OperatorSpec::sum(linear, parse_part(param(p, "part"), p, "part."));
  }
  return std::visit([](auto&& part) { return OperatorSpec(OperatorSpec::Kind(part)); }, parse_part(tag, p, ""));
}

const std::string* TextRecord::find(std::string_view key) const {
  for (const auto& [k, v] : fields) {
    if (k == key) return &v;
  }
  return nullptr;
}

std::string to_text(const TextRecord& record) {
  std::string out;
  for (const auto& [k, v] : record.fields) out += k + " = " + v + "\n";
  return out;
}

TextRecord record_from_text(std::string_view text) {
  TextRecord r;
  for (const auto line : split(text, '\n')) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find(" = ");
    require(eq != std::string_view::npos, "record: expected 'key = value', got '" + std::string(t) + "'");
    r.add(std::string(trim(t.substr(0, eq))), std::string(trim(t.substr(eq + 3))));
  }
  return r;
}

namespace {

void add_witness(TextRecord& r, const std::string& name, const WindowWitness& w) {
  r.add(name + ".value", w.value);
  r.add(name + ".probe", std::to_string(w.probe));
  r.add(name + ".first_step", std::to_string(w.first_step));
  r.add(name + ".last_step", std::to_string(w.last_step));
}

}  // namespace

TextRecord to_record(const GspVerification& v) {
  TextRecord r;
  r.add("passed", v.passed());
  r.add("tolerance", v.tolerance);
  r.add("node_defect", v.node_defect);
  r.add("domain_defect", v.domain_defect);
  r.add("path_gap", v.path_gap);
  r.add("path_gap_exact", v.path_gap_exact);
  add_witness(r, "min_window", v.min_window);
  r.add("node_ok", v.node_ok);
  r.add("domain_ok", v.domain_ok);
  r.add("inequality_ok", v.inequality_ok);
  r.add("gap_ok", v.gap_ok);
  return r;
}

TextRecord to_record(const SviVerification& v) {
  TextRecord r;
  r.add("passed", v.passed());
  r.add("tolerance", v.tolerance);
  add_witness(r, "min_window_a1", v.min_window_a1);
  add_witness(r, "min_window_a2", v.min_window_a2);
  r.add("path_gap", v.path_gap);
  r.add("path_gap_exact", v.path_gap_exact);
  r.add("a1_ok", v.a1_ok);
  r.add("a2_ok", v.a2_ok);
  return r;
}

TextRecord to_record(const GspDiagnostics& d) {
  TextRecord r;
  r.add("scheme", to_string(d.scheme));
  r.add("sup_norm", d.sup_norm);
  r.add("total_variation", d.total_variation);
  r.add("max_step_gap", d.max_step_gap ? format_real(*d.max_step_gap) : std::string("none"));
  r.add("gap_exact", d.gap_exact);
  r.add("node_defect", d.node_defect);
  r.add("eps", d.eps);
  r.add("max_dt", d.max_dt);
  return r;
}

void write_path_csv(std::ostream& os, const GridPath& x) {
  os << "t";
  for (Eigen::Index r = 0; r < x.dim(); ++r) os << ",v" << r + 1;
  os << "\n";
  for (std::size_t i = 0; i < x.grid.nodes(); ++i) {
    os << format_real(x.grid.times()[i]);
    for (Eigen::Index r = 0; r < x.dim(); ++r) os << ',' << format_real(x.values(r, static_cast<Eigen::Index>(i)));
    os << "\n";
  }
}

namespace {

// Rows of a numeric CSV with the given header prefix; returns the column count.
std::vector<Vec> read_numeric_csv(std::istream& is, const std::string& prefix, std::size_t& columns) {
  std::string header;
  require(static_cast<bool>(std::getline(is, header)), "csv: missing header");
  const auto names = split(trim(header), ',');
  require(names.size() >= 2 && names[0] == "t", "csv: header must start with t");
  for (std::size_t c = 1; c < names.size(); ++c) {
    require(names[c] == prefix + std::to_string(c), "csv: unexpected column '" + std::string(names[c]) + "'");
  }
  columns = names.size();
  std::vector<Vec> rows;
  for (std::string line; std::getline(is, line);) {
    if (trim(line).empty()) continue;
    Vec row = parse_vector(line);
    require(static_cast<std::size_t>(row.size()) == columns, "csv: row has the wrong number of fields");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

GridPath read_path_csv(std::istream& is) {
  std::size_t columns = 0;
  const auto rows = read_numeric_csv(is, "v", columns);
  require(!rows.empty(), "csv: path has no rows");
  std::vector<double> times;
  Mat values(static_cast<Eigen::Index>(columns - 1), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    times.push_back(rows[i][0]);
    values.col(static_cast<Eigen::Index>(i)) = rows[i].tail(values.rows());
  }
  return GridPath(TimeGrid(std::move(times)), values);
}

void write_bv_csv(std::ostream& os, const BVPath& k) {
  os << "t";
  for (Eigen::Index r = 0; r < k.dim(); ++r) os << ",dk" << r + 1;
  os << "\n";
  for (std::size_t i = 0; i < k.grid.steps(); ++i) {
    os << format_real(k.grid.times()[i + 1]);
    for (Eigen::Index r = 0; r < k.dim(); ++r) os << ',' << format_real(k.increments(r, static_cast<Eigen::Index>(i)));
    os << "\n";
  }
}

BVPath read_bv_csv(std::istream& is) {
  std::size_t columns = 0;
  const auto rows = read_numeric_csv(is, "dk", columns);
  require(!rows.empty(), "csv: BV path has no rows");
  std::vector<double> times{0.0};
  Mat inc(static_cast<Eigen::Index>(columns - 1), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    times.push_back(rows[i][0]);
    inc.col(static_cast<Eigen::Index>(i)) = rows[i].tail(inc.rows());
  }
  return BVPath(TimeGrid(std::move(times)), inc);
}

void write_gap_csv(std::ostream& os, const std::vector<GapRow>& rows) {
  os << "operator,x,xstar,gap,exact,witness_u,witness_ustar\n";
  for (const GapRow& row : rows) {
    os << row.op << ',' << csv_vector(row.x) << ',' << csv_vector(row.xstar) << ',' << format_real(row.report.gap) << ','
       << (row.report.exact ? "true" : "false") << ',';
    if (row.report.witness) os << csv_vector(row.report.witness->u) << ',' << csv_vector(row.report.witness->ustar);
    else os << ',';
    os << "\n";
  }
}

void write_trace_csv(std::ostream& os, const std::vector<double>& trace) {
  os << "iter,objective\n";
  for (std::size_t i = 0; i < trace.size(); ++i) os << i << ',' << format_real(trace[i]) << "\n";
}

void write_ensemble_csv(std::ostream& os, const SdeEnsemble& ensemble) {
  os << "path_id,supX,TVK,fitz_gap\n";
  for (std::size_t p = 0; p < ensemble.paths.size(); ++p) {
    const PathSummary& s = ensemble.paths[p];
    os << p << ',' << format_real(s.sup_x) << ',' << format_real(s.tv_k) << ',' << format_real(s.fitz_gap) << "\n";
  }
}

void write_tree_csv(std::ostream& os, const BsviSolution& sol) {
  os << "level,node,Y,Z,H,gap\n";
  const std::size_t n = sol.tree.depth();
  for (std::size_t i = 0; i <= n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      os << i << ',' << j << ',' << csv_vector(sol.Y.at(i, j)) << ',';
      if (i < n) {
        os << csv_vector(sol.Z.at(i, j)) << ',' << csv_vector(sol.H.at(i, j)) << ',' << format_real(sol.gap.at(i, j)[0]);
      } else {
        os << ",,";
      }
      os << "\n";
    }
  }
}

}  // namespace mmfitz
