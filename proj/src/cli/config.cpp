#include "mmfitz/cli.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mmfitz::cli {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string where(const std::string& section, const std::string& key) { return "[" + section + "] " + key; }

// Rethrows parse failures of a value as ConfigError with its location.
template <class F>
auto convert(const std::string& section, const std::string& key, F&& f) {
  try {
    return f();
  } catch (const PreconditionError& e) {
    throw ConfigError(where(section, key) + ": " + e.what());
  }
}

}  // namespace

Config Config::parse(std::string_view text, std::string base_dir) {
  Config c;
  c.base_dir_ = std::move(base_dir);
  std::string section;
  std::istringstream is{std::string(text)};
  std::size_t line_no = 0;
  for (std::string raw; std::getline(is, raw);) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": key outside of a section");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (c.find(section, key) != nullptr) throw ConfigError("line " + std::to_string(line_no) + ": repeated key " + where(section, key));
    c.entries_.push_back({section, key, trim(std::string_view(line).substr(eq + 1))});
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const auto dir = std::filesystem::absolute(std::filesystem::path(path)).parent_path();
  return parse(ss.str(), dir.string());
}

const Config::Entry* Config::find(const std::string& section, const std::string& key) const {
  for (const Entry& e : entries_) {
    if (e.section == section && e.key == key) return &e;
  }
  return nullptr;
}

bool Config::has(const std::string& section, const std::string& key) const { return find(section, key) != nullptr; }

const std::string& Config::get(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (e == nullptr) throw ConfigError("missing key " + where(section, key));
  used_.emplace(section, key);
  return e->value;
}

std::string Config::get_or(const std::string& section, const std::string& key, const std::string& fallback) const {
  return has(section, key) ? get(section, key) : fallback;
}

double Config::real(const std::string& section, const std::string& key) const {
  return convert(section, key, [&] { return parse_real(get(section, key)); });
}

double Config::real_or(const std::string& section, const std::string& key, double fallback) const {
  return has(section, key) ? real(section, key) : fallback;
}

std::uint64_t Config::count(const std::string& section, const std::string& key) const {
  const std::string& v = get(section, key);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(where(section, key) + ": expected a nonnegative integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t Config::count_or(const std::string& section, const std::string& key, std::uint64_t fallback) const {
  return has(section, key) ? count(section, key) : fallback;
}

bool Config::flag_or(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string& v = get(section, key);
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(where(section, key) + ": expected true or false, got '" + v + "'");
}

Vec Config::vector(const std::string& section, const std::string& key) const {
  return convert(section, key, [&] { return parse_vector(get(section, key)); });
}

Mat Config::matrix(const std::string& section) const {
  const std::uint64_t rows = count(section, "rows");
  const Vec flat = vector(section, "values");
  if (rows == 0 || flat.size() % static_cast<Eigen::Index>(rows) != 0) {
    throw ConfigError(where(section, "values") + ": size is not a multiple of rows");
  }
  const auto r = static_cast<Eigen::Index>(rows);
  const Eigen::Index c = flat.size() / r;
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = flat[i * c + j];
  }
  return m;
}

std::string Config::file(const std::string& section, const std::string& key) const {
  std::filesystem::path p(get(section, key));
  if (p.is_relative()) p = std::filesystem::path(base_dir_) / p;
  if (!std::filesystem::is_regular_file(p)) throw ConfigError(where(section, key) + ": no such file '" + p.string() + "'");
  return p.lexically_normal().string();
}

void Config::require_all_used() const {
  for (const Entry& e : entries_) {
    if (used_.count({e.section, e.key}) == 0) throw ConfigError("unknown key " + where(e.section, e.key));
  }
}

Config config_from_manifest(const TextRecord& manifest) {
  std::string text;
  std::string section;
  std::string base_dir = ".";
  for (const auto& [key, value] : manifest.fields) {
    if (key == "config_dir") base_dir = value;
    if (key.rfind("config.", 0) != 0) continue;
    const auto dot = key.find('.', 7);
    if (dot == std::string::npos) throw ConfigError("manifest: malformed config echo '" + key + "'");
    const std::string s = key.substr(7, dot - 7);
    if (s != section) {
      text += "[" + s + "]\n";
      section = s;
    }
    text += key.substr(dot + 1) + " = " + value + "\n";
  }
  if (text.empty()) throw ConfigError("manifest: no config echo");
  return Config::parse(text, base_dir);
}

}  // namespace mmfitz::cli
