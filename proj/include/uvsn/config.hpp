#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "uvsn/errors.hpp"

namespace uvsn {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// Flat key/value configuration. One `section.key = value` per line, `#`
// starts a comment. Command-line overrides use the same `section.key=value`
// syntax. Keys are kept sorted so serialization is canonical.
class ConfigMap {
 public:
  ConfigMap() = default;

  static ConfigMap parse_text(const std::string& text) {
    ConfigMap cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
      }
      const std::string key = detail::trim(line.substr(0, eq));
      const std::string value = detail::trim(line.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
      }
      cfg.set(key, value);
    }
    return cfg;
  }

  static ConfigMap load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool contains(const std::string& key) const { return values_.count(key) != 0; }

  // `key=value` tokens, e.g. from --section.key=value command-line flags.
  void apply_override(const std::string& token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override must look like section.key=value, got '" + token + "'");
    }
    set(detail::trim(token.substr(0, eq)), detail::trim(token.substr(eq + 1)));
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required config key: " + key);
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_double(key, it->second);
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_int(key, it->second);
  }

  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const std::uint64_t v = std::stoull(it->second, &pos, 0);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": expected unsigned integer, got '" + it->second + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config key " + key + ": expected bool, got '" + v + "'");
  }

  // Comma-separated integer list, e.g. "64,128,256,256".
  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    std::istringstream in(it->second);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      out.push_back(static_cast<int>(parse_int(key, detail::trim(tok))));
    }
    if (out.empty()) throw ConfigError("config key " + key + ": empty list");
    return out;
  }

  // Every key must be in `allowed`; unknown keys are rejected up front so
  // typos fail before any long computation.
  void require_known_keys(const std::set<std::string>& allowed) const {
    for (const auto& [k, v] : values_) {
      if (!allowed.count(k)) throw ConfigError("unknown config key: " + k);
    }
  }

  std::string serialize() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
    return out.str();
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static double parse_double(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("");
      return x;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": expected number, got '" + v + "'");
    }
  }

  static std::int64_t parse_int(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      const std::int64_t x = std::stoll(v, &pos, 0);
      if (pos != v.size()) throw std::invalid_argument("");
      return x;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": expected integer, got '" + v + "'");
    }
  }

  std::map<std::string, std::string> values_;
};

}  // namespace uvsn
