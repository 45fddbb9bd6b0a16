// Text and CSV serialization. Reals are written with 17 significant digits so every
// finite double round-trips exactly; infinities are written as inf and -inf.
#pragma once

#include "mmfitz/backward_tree.hpp"
#include "mmfitz/fitzpatrick.hpp"
#include "mmfitz/forward_sde.hpp"
#include "mmfitz/gsp.hpp"
#include "mmfitz/operators.hpp"
#include "mmfitz/paths.hpp"
#include "mmfitz/variational.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mmfitz {

std::string format_real(double v);
/// Accepts everything format_real writes; throws PreconditionError otherwise.
double parse_real(std::string_view text);

/// Components joined by sep.
std::string format_vector(const Vec& v, char sep = ',');
Vec parse_vector(std::string_view text, char sep = ',');

/// One line: the kind tag followed by key=value parameters, e.g. `NormalConeBox lo=0,0 hi=1,inf`.
/// Matrices are written row-major with a `rows` field. Sum parts use `part.` prefixed keys.
std::string to_text(const OperatorSpec& op);
OperatorSpec operator_from_text(std::string_view text);

/// `key = value` records in insertion order; keys may repeat.
struct TextRecord {
  std::vector<std::pair<std::string, std::string>> fields;

  void add(std::string key, std::string value) { fields.emplace_back(std::move(key), std::move(value)); }
  void add(std::string key, double value) { add(std::move(key), format_real(value)); }
  void add(std::string key, bool value) { add(std::move(key), std::string(value ? "true" : "false")); }
  /// First value stored under key, or nullptr.
  const std::string* find(std::string_view key) const;
};

std::string to_text(const TextRecord& record);
TextRecord record_from_text(std::string_view text);

TextRecord to_record(const GspVerification& v);
TextRecord to_record(const SviVerification& v);
TextRecord to_record(const GspDiagnostics& d);

/// Header `t,v1,...,vd`, one row per node.
void write_path_csv(std::ostream& os, const GridPath& x);
GridPath read_path_csv(std::istream& is);
/// Header `t,dk1,...,dkd`, one row per step holding t_{i+1} and dk_i; the grid starts at 0.
void write_bv_csv(std::ostream& os, const BVPath& k);
BVPath read_bv_csv(std::istream& is);

struct GapRow {
  std::string op;
  Vec x;
  Vec xstar;
  GapReport report;
};

/// Header `operator,x,xstar,gap,exact,witness_u,witness_ustar`; vectors joined by ';'.
void write_gap_csv(std::ostream& os, const std::vector<GapRow>& rows);
/// Header `iter,objective`.
void write_trace_csv(std::ostream& os, const std::vector<double>& trace);
/// Header `path_id,supX,TVK,fitz_gap`.
void write_ensemble_csv(std::ostream& os, const SdeEnsemble& ensemble);
/// Header `level,node,Y,Z,H,gap`; vectors joined by ';', leaf rows leave Z, H and gap empty.
void write_tree_csv(std::ostream& os, const BsviSolution& sol);

}  // namespace mmfitz
