#pragma once

// Sensor CSV ingestion and fixed-length windowing.
// Schema: header `timestamp,ax,ay,az,label`; real-valued columns use '.'
// decimals; label is a non-negative integer. Parse errors carry 1-based line
// numbers.

#include <charconv>
#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vskd/common.hpp"
#include "vskd/encoding.hpp"

namespace vskd::io {

struct SensorRow {
  double timestamp = 0.0;
  double ax = 0.0, ay = 0.0, az = 0.0;
  int label = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      return fields;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

inline double parse_real(std::string_view field, std::size_t line_no,
                         const char* column) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || end != field.data() + field.size())
    throw InvalidInput("line " + std::to_string(line_no) + ": bad " + column +
                       " value '" + std::string(field) + "'");
  return v;
}

inline int parse_label(std::string_view field, std::size_t line_no) {
  int v = 0;
  const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || end != field.data() + field.size() || v < 0)
    throw InvalidInput("line " + std::to_string(line_no) +
                       ": label must be a non-negative integer, got '" +
                       std::string(field) + "'");
  return v;
}

}  // namespace detail

inline std::vector<SensorRow> parse_sensor_csv(const std::string& text,
                                               const std::string& what) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<SensorRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view stripped = detail::trim(line);
    if (line_no == 1) {
      if (stripped != "timestamp,ax,ay,az,label")
        throw InvalidInput(what + ": line 1: expected header 'timestamp,ax,ay,az,label'");
      continue;
    }
    if (stripped.empty()) continue;
    const auto fields = detail::split_fields(stripped);
    if (fields.size() != 5)
      throw InvalidInput(what + ": line " + std::to_string(line_no) +
                         ": expected 5 comma-separated fields, got " +
                         std::to_string(fields.size()));
    SensorRow row;
    row.timestamp = detail::parse_real(fields[0], line_no, "timestamp");
    row.ax = detail::parse_real(fields[1], line_no, "ax");
    row.ay = detail::parse_real(fields[2], line_no, "ay");
    row.az = detail::parse_real(fields[3], line_no, "az");
    row.label = detail::parse_label(fields[4], line_no);
    rows.push_back(row);
  }
  if (line_no == 0) throw InvalidInput(what + ": empty file");
  return rows;
}

inline std::vector<SensorRow> read_sensor_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput(path + ": cannot open");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_sensor_csv(text, path);
}

/// Non-overlapping fixed-length segmentation; the trailing partial window is
/// dropped. Window label = most frequent row label, ties to the smaller
/// label. Non-monotonic timestamps are reported with the window index.
inline std::vector<SensorWindow> segment_windows(const std::vector<SensorRow>& rows,
                                                 std::size_t window_length) {
  if (window_length < 2)
    throw InvalidInput("window length must be at least 2 samples");
  std::vector<SensorWindow> windows;
  for (std::size_t start = 0; start + window_length <= rows.size();
       start += window_length) {
    SensorWindow w;
    std::map<int, std::size_t> votes;
    for (std::size_t i = start; i < start + window_length; ++i) {
      w.timestamps.push_back(rows[i].timestamp);
      w.samples_x.push_back(rows[i].ax);
      w.samples_y.push_back(rows[i].ay);
      w.samples_z.push_back(rows[i].az);
      ++votes[rows[i].label];
    }
    std::size_t best = 0;
    for (const auto& [label, count] : votes)
      if (count > best) {
        best = count;
        w.label = label;  // map order makes ties resolve to the smaller label
      }
    const std::size_t index = windows.size();
    try {
      w.validate();
    } catch (const InvalidInput& e) {
      throw InvalidInput("window " + std::to_string(index) + ": " + e.what());
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

}  // namespace vskd::io
