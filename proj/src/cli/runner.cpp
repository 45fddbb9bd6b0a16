#include "mmfitz/cli.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace mmfitz::cli {

namespace {

namespace fs = std::filesystem;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool looks_like_manifest(const std::string& text) { return text.rfind("manifest_version", 0) == 0; }

TextRecord load_manifest(const std::string& path) {
  const std::string text = slurp(path);
  if (!looks_like_manifest(text)) throw ConfigError("'" + path + "' is not a run manifest");
  try {
    return record_from_text(text);
  } catch (const PreconditionError& e) {
    throw ConfigError("manifest '" + path + "': " + e.what());
  }
}

std::uint64_t parse_seed(const std::string& text) {
  std::uint64_t seed = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), seed);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("[experiment] seed: expected an unsigned 64-bit integer, got '" + text + "'");
  }
  return seed;
}

fs::path output_dir(const RunRequest& request, const Config& config) {
  // Read the key even when overridden so that it never counts as unknown.
  const std::optional<std::string> configured =
      config.has("experiment", "out") ? std::optional(config.get("experiment", "out")) : std::nullopt;
  if (request.out_dir) return *request.out_dir;
  if (configured) {
    const fs::path p(*configured);
    return p.is_relative() ? fs::path(config.base_dir()) / p : p;
  }
  if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') return env;
  return "mmfitz_out";
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw Error("cannot write '" + path.string() + "'");
}

std::string manifest_text(const RunOutcome& outcome, const Config& config, std::uint64_t seed,
                          const std::string& config_path, double wall_time) {
  TextRecord m;
  m.add("manifest_version", std::string("1"));
  m.add("kind", outcome.kind);
  m.add("mmfitz_version", std::string(kVersion));
  m.add("seed", std::to_string(seed));
  m.add("config_path", config_path);
  m.add("config_dir", config.base_dir());
  for (const Config::Entry& e : config.entries()) {
    if (e.section == "experiment" && e.key == "seed") continue;
    m.add("config." + e.section + "." + e.key, e.value);
  }
  m.add("wall_time_seconds", wall_time);
  for (const auto& [name, content] : outcome.files) m.add("output", name);
  for (const Verdict& v : outcome.verdicts) m.add("verdict." + v.name, std::string(v.passed ? "pass" : "fail"));
  for (const auto& [name, value] : outcome.metrics) m.add("metric." + name, value);
  m.add("status", std::string(outcome.passed() ? "pass" : "fail"));
  return to_text(m);
}

}  // namespace

int run_command(const RunRequest& request, std::ostream& out, std::ostream& err) {
  try {
    const std::string text = slurp(request.config_path);
    Config config;
    std::optional<std::uint64_t> seed = request.seed;
    std::string config_path = request.config_path;
    if (looks_like_manifest(text)) {
      const TextRecord manifest = load_manifest(request.config_path);
      config = config_from_manifest(manifest);
      // A rerun records the original config so that its manifest matches the first one.
      if (const std::string* original = manifest.find("config_path")) config_path = *original;
      if (!seed) {
        const std::string* s = manifest.find("seed");
        if (s == nullptr) throw ConfigError("manifest: no seed");
        seed = parse_seed(*s);
      }
    } else {
      config = Config::load(request.config_path);
    }
    if (config.has("experiment", "seed")) {
      const std::uint64_t configured = parse_seed(config.get("experiment", "seed"));
      if (!seed) seed = configured;
    }
    if (!seed) throw ConfigError("[experiment] seed: required (or pass --seed)");
    const fs::path dir = output_dir(request, config);

    const auto start = std::chrono::steady_clock::now();
    const RunOutcome outcome = execute(config, *seed);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    fs::create_directories(dir);
    for (const auto& [name, content] : outcome.files) write_file(dir / name, content);
    write_file(dir / "manifest.txt", manifest_text(outcome, config, *seed, config_path, wall));

    for (const Verdict& v : outcome.verdicts) out << (v.passed ? "PASS " : "FAIL ") << v.name << '\n';
    for (const std::string& note : outcome.notes) err << note << '\n';
    out << "outputs in " << dir.string() << '\n';
    return outcome.passed() ? kExitPass : kExitVerdictFailed;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const PreconditionError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const ConvergenceError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumericalFailure;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumericalFailure;
  }
}

int compare_command(const std::string& manifest_a, const std::string& manifest_b, double tolerance, std::ostream& out,
                    std::ostream& err) {
  try {
    const TextRecord a = load_manifest(manifest_a);
    const TextRecord b = load_manifest(manifest_b);
    const auto field = [](const TextRecord& r, const char* key) {
      const std::string* v = r.find(key);
      return v == nullptr ? std::string() : *v;
    };
    if (field(a, "kind") != field(b, "kind")) {
      err << "kind mismatch: " << field(a, "kind") << " vs " << field(b, "kind") << '\n';
      return kExitConfigError;
    }
    if (field(a, "config.operator.spec") != field(b, "config.operator.spec")) {
      err << "warning: operators differ; comparing metrics by name\n";
    }

    const auto metrics = [](const TextRecord& r) {
      std::vector<std::pair<std::string, double>> m;
      for (const auto& [key, value] : r.fields) {
        if (key.rfind("metric.", 0) == 0) m.emplace_back(key.substr(7), parse_real(value));
      }
      return m;
    };
    const auto ma = metrics(a);
    const auto mb = metrics(b);
    const auto lookup = [](const std::vector<std::pair<std::string, double>>& m, const std::string& name) {
      for (const auto& [key, value] : m) {
        if (key == name) return std::optional<double>(value);
      }
      return std::optional<double>();
    };

    bool drift = false;
    out << "metric,a,b,diff,drift\n";
    for (const auto& [name, va] : ma) {
      const auto vb = lookup(mb, name);
      if (!vb) {
        out << name << ',' << format_real(va) << ",,,missing\n";
        continue;
      }
      const double diff = *vb - va;
      // Equal values, including equal infinities, never drift; the step size is a setting, not a result.
      const bool grid = name == "max_dt";
      const bool flagged = !grid && !(va == *vb) && !(std::abs(diff) <= tolerance);
      drift = drift || flagged;
      out << name << ',' << format_real(va) << ',' << format_real(*vb) << ',' << format_real(diff) << ','
          << (grid ? "grid" : flagged ? "yes" : "no") << '\n';
    }
    for (const auto& [name, vb] : mb) {
      if (!lookup(ma, name)) out << name << ",," << format_real(vb) << ",,missing\n";
    }

    const auto dt_a = lookup(ma, "max_dt");
    const auto dt_b = lookup(mb, "max_dt");
    if (dt_a && dt_b && *dt_a != *dt_b) {
      out << "\nerror_vs_dt\nmetric,dt_a,dt_b,dt_ratio,abs_diff\n";
      for (const auto& [name, va] : ma) {
        const auto vb = lookup(mb, name);
        if (name == "max_dt" || !vb) continue;
        out << name << ',' << format_real(*dt_a) << ',' << format_real(*dt_b) << ',' << format_real(*dt_a / *dt_b)
            << ',' << format_real(std::abs(*vb - va)) << '\n';
      }
    }
    return drift ? kExitVerdictFailed : kExitPass;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const PreconditionError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  }
}

}  // namespace mmfitz::cli
