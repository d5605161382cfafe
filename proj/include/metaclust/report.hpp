#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "metaclust/graph.hpp"

namespace metaclust {

// One evaluated training run. prauc/hits are NaN for runs without edge
// weights (the no-meta-model variant); they serialize as empty CSV fields and
// JSON nulls.
struct MetricsRow {
  std::string dataset;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  std::string variant;
  double f1 = 0.0;
  double nmi = 0.0;
  double modularity = 0.0;
  double prauc = std::numeric_limits<double>::quiet_NaN();
  double hits = std::numeric_limits<double>::quiet_NaN();
  int epochs = 0;
  double wall_ms = 0.0;
};

inline constexpr const char* kRowHeader =
    "dataset,noise_level,seed,variant,f1,nmi,modularity,prauc,hits,epochs,wall_ms";

namespace detail {

// Shortest decimal string that round-trips to the same double; keeps CSV rows
// reproducible byte for byte.
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::string format_optional(double x) {
  return std::isnan(x) ? std::string() : format_double(x);
}

inline double parse_double_field(const std::string& s, const std::string& what) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::runtime_error("bad numeric field for " + what + ": '" + s + "'");
  return v;
}

}  // namespace detail

inline std::string to_csv_row(const MetricsRow& r) {
  std::ostringstream ss;
  ss << r.dataset << ',' << detail::format_double(r.noise_level) << ',' << r.seed << ','
     << r.variant << ',' << detail::format_double(r.f1) << ','
     << detail::format_double(r.nmi) << ',' << detail::format_double(r.modularity) << ','
     << detail::format_optional(r.prauc) << ',' << detail::format_optional(r.hits) << ','
     << r.epochs << ',' << detail::format_double(r.wall_ms);
  return ss.str();
}

inline nlohmann::json row_to_json(const MetricsRow& r) {
  nlohmann::json j;
  j["dataset"] = r.dataset;
  j["noise_level"] = r.noise_level;
  j["seed"] = r.seed;
  j["variant"] = r.variant;
  j["f1"] = r.f1;
  j["nmi"] = r.nmi;
  j["modularity"] = r.modularity;
  j["prauc"] = std::isnan(r.prauc) ? nlohmann::json() : nlohmann::json(r.prauc);
  j["hits"] = std::isnan(r.hits) ? nlohmann::json() : nlohmann::json(r.hits);
  j["epochs"] = r.epochs;
  j["wall_ms"] = r.wall_ms;
  return j;
}

inline void write_rows_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out << kRowHeader << '\n';
  for (const auto& r : rows) out << to_csv_row(r) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline void write_rows_json(const std::vector<MetricsRow>& rows, const std::string& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) arr.push_back(row_to_json(r));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out << arr.dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline std::vector<MetricsRow> parse_rows_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  if (line != kRowHeader)
    throw std::runtime_error(path + ": unexpected header '" + line + "'");
  std::vector<MetricsRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 11)
      throw std::runtime_error(path + ": expected 11 fields at line " +
                               std::to_string(line_no));
    MetricsRow r;
    r.dataset = f[0];
    r.noise_level = detail::parse_double_field(f[1], "noise_level");
    r.seed = std::stoull(f[2]);
    r.variant = f[3];
    r.f1 = detail::parse_double_field(f[4], "f1");
    r.nmi = detail::parse_double_field(f[5], "nmi");
    r.modularity = detail::parse_double_field(f[6], "modularity");
    r.prauc = detail::parse_double_field(f[7], "prauc");
    r.hits = detail::parse_double_field(f[8], "hits");
    r.epochs = std::stoi(f[9]);
    r.wall_ms = detail::parse_double_field(f[10], "wall_ms");
    rows.push_back(std::move(r));
  }
  return rows;
}

// Mean and sample standard deviation over the non-missing values of one
// metric within a group. count == 0 means the whole group was missing.
struct MetricStat {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stddev = std::numeric_limits<double>::quiet_NaN();
  int count = 0;
};

namespace detail {

inline MetricStat stat_of(const std::vector<double>& xs) {
  MetricStat s;
  for (double x : xs)
    if (!std::isnan(x)) ++s.count;
  if (s.count == 0) return s;
  double sum = 0.0;
  for (double x : xs)
    if (!std::isnan(x)) sum += x;
  s.mean = sum / s.count;
  if (s.count < 2) {
    s.stddev = 0.0;
    return s;
  }
  double ss = 0.0;
  for (double x : xs)
    if (!std::isnan(x)) ss += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(ss / (s.count - 1));
  return s;
}

}  // namespace detail

struct AggregateRow {
  double noise_level = 0.0;
  std::string variant;
  int runs = 0;
  MetricStat f1, nmi, modularity, prauc, hits;
};

// Groups rows by (noise_level, variant) and reduces each metric to mean/std.
// Output is sorted by noise level, then variant name.
inline std::vector<AggregateRow> aggregate_rows(const std::vector<MetricsRow>& rows) {
  std::map<std::pair<double, std::string>, std::vector<const MetricsRow*>> groups;
  for (const auto& r : rows) groups[{r.noise_level, r.variant}].push_back(&r);

  std::vector<AggregateRow> out;
  for (const auto& [key, members] : groups) {
    AggregateRow a;
    a.noise_level = key.first;
    a.variant = key.second;
    a.runs = static_cast<int>(members.size());
    auto collect = [&](double MetricsRow::* field) {
      std::vector<double> xs;
      xs.reserve(members.size());
      for (const MetricsRow* m : members) xs.push_back(m->*field);
      return detail::stat_of(xs);
    };
    a.f1 = collect(&MetricsRow::f1);
    a.nmi = collect(&MetricsRow::nmi);
    a.modularity = collect(&MetricsRow::modularity);
    a.prauc = collect(&MetricsRow::prauc);
    a.hits = collect(&MetricsRow::hits);
    out.push_back(std::move(a));
  }
  return out;
}

inline void write_aggregate_csv(const std::vector<AggregateRow>& aggs,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out << "noise_level,variant,runs"
         ",f1_mean,f1_std,nmi_mean,nmi_std,modularity_mean,modularity_std"
         ",prauc_mean,prauc_std,hits_mean,hits_std\n";
  auto opt = [](double x) { return detail::format_optional(x); };
  for (const auto& a : aggs) {
    out << detail::format_double(a.noise_level) << ',' << a.variant << ',' << a.runs;
    for (const MetricStat* s : {&a.f1, &a.nmi, &a.modularity, &a.prauc, &a.hits})
      out << ',' << opt(s->mean) << ',' << opt(s->stddev);
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

// Plain-text table, one line per (noise level, variant), metrics as
// "mean+-std" to four decimals.
inline std::string format_aggregate_table(const std::vector<AggregateRow>& aggs) {
  auto cell = [](const MetricStat& s) {
    if (s.count == 0) return std::string("-");
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.4f+-%.4f", s.mean, s.stddev);
    return std::string(buf);
  };
  std::vector<std::vector<std::string>> table;
  table.push_back({"noise", "variant", "runs", "f1", "nmi", "modularity", "prauc", "hits"});
  for (const auto& a : aggs) {
    char noise[32];
    std::snprintf(noise, sizeof(noise), "%.2f", a.noise_level);
    table.push_back({noise, a.variant, std::to_string(a.runs), cell(a.f1), cell(a.nmi),
                     cell(a.modularity), cell(a.prauc), cell(a.hits)});
  }
  std::vector<std::size_t> width(table[0].size(), 0);
  for (const auto& row : table)
    for (std::size_t c = 0; c < row.size(); ++c)
      width[c] = std::max(width[c], row[c].size());
  std::ostringstream ss;
  for (const auto& row : table) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      ss << row[c] << std::string(width[c] - row[c].size(), ' ');
      ss << (c + 1 < row.size() ? "  " : "");
    }
    ss << '\n';
  }
  return ss.str();
}

}  // namespace metaclust
