// Batch experiment runner behind the mmfitz command line tool.
//
// A run reads an INI-style config, validates every key before any work starts, computes
// all results in memory and only then writes CSVs, reports and a manifest. Outputs depend
// on the config and the seed alone.
#pragma once

#include "mmfitz/core.hpp"
#include "mmfitz/io.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace mmfitz::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutDirEnv = "MMFITZ_OUT_DIR";

enum ExitCode : int {
  kExitPass = 0,
  kExitVerdictFailed = 1,
  kExitConfigError = 2,
  kExitNumericalFailure = 3,
};

/// Unreadable or invalid configuration; maps to kExitConfigError.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// `[section]` headers, `key = value` lines, `#` comments. Every key must be read by the
/// experiment; leftovers are reported by require_all_used.
class Config {
 public:
  static Config parse(std::string_view text, std::string base_dir = ".");
  static Config load(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  const std::string& get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key, const std::string& fallback) const;
  double real(const std::string& section, const std::string& key) const;
  double real_or(const std::string& section, const std::string& key, double fallback) const;
  std::uint64_t count(const std::string& section, const std::string& key) const;
  std::uint64_t count_or(const std::string& section, const std::string& key, std::uint64_t fallback) const;
  bool flag_or(const std::string& section, const std::string& key, bool fallback) const;
  Vec vector(const std::string& section, const std::string& key) const;
  /// `rows` and row-major `values` keys of a section.
  Mat matrix(const std::string& section) const;
  /// A path relative to the config file's directory made absolute.
  std::string file(const std::string& section, const std::string& key) const;

  /// Throws ConfigError naming the first key never read.
  void require_all_used() const;

  /// Entries in file order as (section, key, value).
  struct Entry {
    std::string section;
    std::string key;
    std::string value;
  };
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const std::string& base_dir() const noexcept { return base_dir_; }

 private:
  const Entry* find(const std::string& section, const std::string& key) const;

  std::vector<Entry> entries_;
  std::string base_dir_;
  mutable std::set<std::pair<std::string, std::string>> used_;
};

/// Leaf payoff w -> value over the grammar: numbers, `w`, + - * /, parentheses, unary minus,
/// min(a, b, ...), max(a, b, ...), abs(a), clip(a, lo, hi).
class Expression {
 public:
  static Expression parse(std::string_view text);
  double operator()(double w) const;
  const std::string& source() const noexcept { return source_; }

  struct Node;

 private:
  std::shared_ptr<const Node> root_;
  std::string source_;
};

struct Verdict {
  std::string name;
  bool passed = false;
};

/// Everything a run produces, in output order.
struct RunOutcome {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> files;  ///< name, content
  std::vector<Verdict> verdicts;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::string> notes;  ///< human-readable diagnostics for stderr

  bool passed() const;
};

/// Validates and runs one experiment. Throws ConfigError for invalid configs before any
/// numerical work and ConvergenceError on numerical failure.
RunOutcome execute(const Config& config, std::uint64_t seed);

struct RunRequest {
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
};

/// Full `run` command: load, execute, write outputs and manifest.txt; returns the exit code.
int run_command(const RunRequest& request, std::ostream& out, std::ostream& err);

/// `compare` of two manifests: per-metric differences, drift flagged above tolerance.
int compare_command(const std::string& manifest_a, const std::string& manifest_b, double tolerance, std::ostream& out,
                    std::ostream& err);

/// Config rebuilt from the config echo of a manifest.
Config config_from_manifest(const TextRecord& manifest);

}  // namespace mmfitz::cli
