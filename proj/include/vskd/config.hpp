#pragma once

// Flat `key = value` configuration files: UTF-8, one pair per line, '#'
// starts a comment anywhere. Values are kept as strings; typed getters parse
// on demand. Echoed configs are written with sorted keys so identical
// settings yield identical files.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "vskd/common.hpp"

namespace vskd::io {

using Config = std::map<std::string, std::string>;

namespace detail {

inline std::string_view trim_ws(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline Config parse_config(const std::string& text, const std::string& what) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos)
      s = s.substr(0, hash);
    s = detail::trim_ws(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw InvalidInput(what + ": line " + std::to_string(line_no) +
                         ": expected 'key = value'");
    const std::string key(detail::trim_ws(s.substr(0, eq)));
    const std::string value(detail::trim_ws(s.substr(eq + 1)));
    if (key.empty())
      throw InvalidInput(what + ": line " + std::to_string(line_no) + ": empty key");
    cfg[key] = value;
  }
  return cfg;
}

inline Config read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput(path + ": cannot open");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config(text, path);
}

inline std::string format_config(const Config& cfg) {
  std::string out;
  for (const auto& [key, value] : cfg) out += key + " = " + value + "\n";
  return out;
}

inline void write_config(const std::string& path, const Config& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArtifactError(path + ": cannot open for writing");
  out << format_config(cfg);
  if (!out.flush()) throw ArtifactError(path + ": write failed");
}

/// Shortest decimal string that parses back to exactly the same double.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string get_string(const Config& cfg, const std::string& key,
                              const std::string& fallback) {
  const auto it = cfg.find(key);
  return it == cfg.end() ? fallback : it->second;
}

inline double get_double(const Config& cfg, const std::string& key, double fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  double v = 0.0;
  const std::string& s = it->second;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size())
    throw InvalidInput("config key '" + key + "': bad real value '" + s + "'");
  return v;
}

inline std::uint64_t get_u64(const Config& cfg, const std::string& key,
                             std::uint64_t fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  std::uint64_t v = 0;
  const std::string& s = it->second;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size())
    throw InvalidInput("config key '" + key + "': bad integer value '" + s + "'");
  return v;
}

inline bool get_bool(const Config& cfg, const std::string& key, bool fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw InvalidInput("config key '" + key + "': bad boolean value '" + it->second + "'");
}

}  // namespace vskd::io
