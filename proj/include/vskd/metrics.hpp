#pragma once

// Training metrics as line-delimited JSON records, one per epoch and split,
// plus the ablation results table as CSV. Doubles are printed with %.17g so
// parsing a line reproduces the logged values bit-exactly.

#include <charconv>
#include <cstddef>
#include <string>
#include <vector>

#include "vskd/common.hpp"
#include "vskd/config.hpp"  // format_double

namespace vskd::io {

struct MetricRecord {
  std::size_t epoch = 0;
  std::string split;  // "train" or "test"
  double loss_total = 0.0;
  double loss_ce = 0.0;
  double loss_kd = 0.0;
  double loss_d = 0.0;
  double loss_a = 0.0;
  double loss_s = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
};

inline std::string format_metric(const MetricRecord& r) {
  std::string out = "{\"epoch\":" + std::to_string(r.epoch);
  out += ",\"split\":\"" + r.split + "\"";
  const std::pair<const char*, double> fields[] = {
      {"loss_total", r.loss_total}, {"loss_ce", r.loss_ce},
      {"loss_kd", r.loss_kd},       {"loss_d", r.loss_d},
      {"loss_a", r.loss_a},         {"loss_s", r.loss_s},
      {"accuracy", r.accuracy},     {"f1", r.f1}};
  for (const auto& [name, value] : fields)
    out += ",\"" + std::string(name) + "\":" + format_double(value);
  out += "}";
  return out;
}

namespace detail {

inline std::string_view metric_field(std::string_view line, const char* name,
                                     const std::string& what) {
  const std::string key = "\"" + std::string(name) + "\":";
  const auto pos = line.find(key);
  if (pos == std::string_view::npos)
    throw ArtifactError(what + ": metric line missing field '" + std::string(name) + "'");
  std::string_view rest = line.substr(pos + key.size());
  std::size_t end = 0;
  while (end < rest.size() && rest[end] != ',' && rest[end] != '}') ++end;
  return rest.substr(0, end);
}

inline double metric_double(std::string_view line, const char* name,
                            const std::string& what) {
  const std::string_view field = metric_field(line, name, what);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || end != field.data() + field.size())
    throw ArtifactError(what + ": bad numeric field '" + std::string(name) + "'");
  return v;
}

}  // namespace detail

inline MetricRecord parse_metric(const std::string& line,
                                 const std::string& what = "metrics") {
  MetricRecord r;
  r.epoch = static_cast<std::size_t>(detail::metric_double(line, "epoch", what));
  std::string_view split = detail::metric_field(line, "split", what);
  if (split.size() < 2 || split.front() != '"' || split.back() != '"')
    throw ArtifactError(what + ": bad split field");
  r.split = std::string(split.substr(1, split.size() - 2));
  r.loss_total = detail::metric_double(line, "loss_total", what);
  r.loss_ce = detail::metric_double(line, "loss_ce", what);
  r.loss_kd = detail::metric_double(line, "loss_kd", what);
  r.loss_d = detail::metric_double(line, "loss_d", what);
  r.loss_a = detail::metric_double(line, "loss_a", what);
  r.loss_s = detail::metric_double(line, "loss_s", what);
  r.accuracy = detail::metric_double(line, "accuracy", what);
  r.f1 = detail::metric_double(line, "f1", what);
  return r;
}

struct AblationRow {
  std::string variant;
  double accuracy = 0.0;
  double f1 = 0.0;
};

inline std::string format_ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "variant,accuracy,f1\n";
  for (const AblationRow& r : rows)
    out += r.variant + "," + format_double(r.accuracy) + "," +
           format_double(r.f1) + "\n";
  return out;
}

inline std::vector<AblationRow> parse_ablation_csv(const std::string& text,
                                                   const std::string& what) {
  std::vector<AblationRow> rows;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "variant,accuracy,f1")
        throw ArtifactError(what + ": bad ablation header");
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw ArtifactError(what + ": bad ablation row '" + line + "'");
    AblationRow r;
    r.variant = line.substr(0, c1);
    const auto num = [&](std::string_view s) {
      double v = 0.0;
      const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || end != s.data() + s.size())
        throw ArtifactError(what + ": bad ablation number '" + std::string(s) + "'");
      return v;
    };
    r.accuracy = num(std::string_view(line).substr(c1 + 1, c2 - c1 - 1));
    r.f1 = num(std::string_view(line).substr(c2 + 1));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace vskd::io
