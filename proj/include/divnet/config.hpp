#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "divnet/errors.hpp"

namespace divnet {

/// Versioned key-value config files:
///
///   config_version = 1
///   [section]
///   key = value          # comment
///
/// Keys are addressed as "section.key" ("key" alone before any section).
class ConfigFile {
 public:
  static ConfigFile parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw format_error(path + ": cannot open config file");
    std::stringstream buf;
    buf << is.rdbuf();
    return parse(buf.str(), path);
  }

  static ConfigFile parse(const std::string& text, const std::string& origin = "<config>") {
    ConfigFile cfg;
    cfg.origin_ = origin;
    std::istringstream is(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      if (trimmed.front() == '[') {
        if (trimmed.back() != ']')
          throw format_error(origin + ":" + std::to_string(line_no) + ": unterminated section");
        section = trim(trimmed.substr(1, trimmed.size() - 2));
        continue;
      }
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw format_error(origin + ":" + std::to_string(line_no) + ": expected key = value");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty())
        throw format_error(origin + ":" + std::to_string(line_no) + ": empty key");
      cfg.values_[section.empty() ? key : section + "." + key] = value;
    }
    const std::uint64_t version = cfg.get_u64("config_version", 0);
    if (version != 1)
      throw format_error(origin + ": config_version must be 1 (got " + std::to_string(version) +
                         ")");
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw format_error(origin_ + ": missing required key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : to_double(key, it->second);
  }

  double require_double(const std::string& key) const { return to_double(key, require_string(key)); }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : to_u64(key, it->second);
  }

  std::uint64_t require_u64(const std::string& key) const { return to_u64(key, require_string(key)); }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw format_error(origin_ + ": key '" + key + "' must be true/false");
  }

  std::vector<std::string> get_string_list(const std::string& key) const {
    std::vector<std::string> out;
    const auto it = values_.find(key);
    if (it == values_.end()) return out;
    std::istringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const std::string t = trim(tok);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

  std::vector<double> get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : get_string_list(key)) out.push_back(to_double(key, s));
    return out;
  }

  const std::string& origin() const { return origin_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  double to_double(const std::string& key, const std::string& v) const {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw format_error(origin_ + ": key '" + key + "' has non-numeric value '" + v + "'");
    }
  }

  std::uint64_t to_u64(const std::string& key, const std::string& v) const {
    try {
      std::size_t used = 0;
      const auto u = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return u;
    } catch (const std::exception&) {
      throw format_error(origin_ + ": key '" + key + "' has non-integer value '" + v + "'");
    }
  }

  std::map<std::string, std::string> values_;
  std::string origin_;
};

}  // namespace divnet
