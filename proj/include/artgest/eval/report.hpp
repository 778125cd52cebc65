#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "artgest/eval/metrics.hpp"

namespace artgest::eval {

using nlohmann::json;

/// One Backbone x Variant row of the results table, in percent.
struct MultiRunSummary {
  std::string backbone;
  Variant variant = Variant::with_context;
  double mean_f1 = 0.0;  // percent
  double std_f1 = 0.0;   // percent
  int n_runs = 0;
};

enum class ReportFormat { markdown, json };

inline ReportFormat report_format_from_string(const std::string& s) {
  if (s == "markdown") return ReportFormat::markdown;
  if (s == "json") return ReportFormat::json;
  fail(ErrorCode::InvalidArgument, "unknown report format '" + s + "'");
}

inline std::string format_one_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

/// "17.3 ± 1.8", with a single-run marker when only one run backs the row.
inline std::string format_mean_std(double mean, double std, bool single_run) {
  std::string s = format_one_decimal(mean) + " ± " + format_one_decimal(std);
  if (single_run) s += " (single run)";
  return s;
}

inline const char* variant_display(Variant v) {
  return v == Variant::with_context ? "With Context" : "Without Context";
}

inline json summary_to_json(const MultiRunSummary& row) {
  return json{{"backbone", row.backbone},
              {"variant", to_string(row.variant)},
              {"mean_f1", row.mean_f1},
              {"std_f1", row.std_f1},
              {"n_runs", row.n_runs}};
}

inline MultiRunSummary summary_from_json(const json& j) {
  MultiRunSummary row;
  row.backbone = j.at("backbone").get<std::string>();
  row.variant = variant_from_string(j.at("variant").get<std::string>());
  row.mean_f1 = j.at("mean_f1").get<double>();
  row.std_f1 = j.at("std_f1").get<double>();
  row.n_runs = j.at("n_runs").get<int>();
  return row;
}

/// Renders summary rows as a markdown table or a lossless JSON array.
inline std::string render_report(const std::vector<MultiRunSummary>& rows, ReportFormat format) {
  require(!rows.empty(), ErrorCode::EmptyInput, "render_report: no rows");
  if (format == ReportFormat::json) {
    json arr = json::array();
    for (const auto& r : rows) arr.push_back(summary_to_json(r));
    return arr.dump(2) + "\n";
  }
  std::string out;
  out += "| Backbone | Variant | Test-F1 |\n";
  out += "|---|---|---|\n";
  for (const auto& r : rows) {
    out += "| " + r.backbone + " | " + variant_display(r.variant) + " | " +
           format_mean_std(r.mean_f1, r.std_f1, r.n_runs == 1) + " |\n";
  }
  return out;
}

inline std::vector<MultiRunSummary> parse_summaries(const std::string& json_text) {
  json arr = json::parse(json_text);
  std::vector<MultiRunSummary> rows;
  for (const auto& j : arr) rows.push_back(summary_from_json(j));
  return rows;
}

// ---------------------------------------------------------------------------
// Per-run-set report files (what `evaluate` / multi-seed training emit and
// `report` consumes).

struct RunSetReport {
  std::string backbone;
  Variant variant = Variant::with_context;
  std::vector<MetricsReport> per_run;

  MultiRunSummary summarize() const {
    std::vector<double> values;
    for (const auto& r : per_run) values.push_back(r.macro_f1 * 100.0);
    const AggregateStats agg = aggregate_runs(values);
    return MultiRunSummary{backbone, variant, agg.mean, agg.std, static_cast<int>(per_run.size())};
  }
};

inline json metrics_report_to_json(const MetricsReport& r) {
  json per_class = json::array();
  for (double f : r.per_class_f1) per_class.push_back(f);
  json confusion = json::array();
  for (int64_t i = 0; i < r.confusion.num_classes; ++i) {
    json row = json::array();
    for (int64_t j = 0; j < r.confusion.num_classes; ++j) row.push_back(r.confusion.at(i, j));
    confusion.push_back(row);
  }
  return json{{"run_id", r.run_id},
              {"seed", r.seed},
              {"variant", to_string(r.variant)},
              {"macro_f1", r.macro_f1},
              {"weighted_f1", r.weighted_f1},
              {"per_class_f1", per_class},
              {"per_class_precision", r.per_class_precision},
              {"per_class_recall", r.per_class_recall},
              {"support", r.support},
              {"confusion", confusion}};
}

inline MetricsReport metrics_report_from_json(const json& j) {
  MetricsReport r;
  r.run_id = j.value("run_id", "");
  r.seed = j.value("seed", uint64_t{0});
  r.variant = variant_from_string(j.at("variant").get<std::string>());
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.weighted_f1 = j.value("weighted_f1", 0.0);
  r.per_class_f1 = j.at("per_class_f1").get<std::vector<double>>();
  if (j.contains("per_class_precision"))
    r.per_class_precision = j.at("per_class_precision").get<std::vector<double>>();
  if (j.contains("per_class_recall"))
    r.per_class_recall = j.at("per_class_recall").get<std::vector<double>>();
  if (j.contains("support")) r.support = j.at("support").get<std::vector<int64_t>>();
  if (j.contains("confusion")) {
    const auto& cj = j.at("confusion");
    ConfusionMatrix cm(static_cast<int64_t>(cj.size()));
    for (int64_t i = 0; i < cm.num_classes; ++i)
      for (int64_t k = 0; k < cm.num_classes; ++k) cm.at(i, k) = cj[i][k].get<int64_t>();
    r.confusion = cm;
  }
  return r;
}

inline json run_set_to_json(const RunSetReport& rs) {
  const MultiRunSummary s = rs.summarize();
  json per_run = json::array();
  for (const auto& r : rs.per_run) per_run.push_back(metrics_report_to_json(r));
  return json{{"backbone", rs.backbone}, {"variant", to_string(rs.variant)},
              {"n_runs", s.n_runs},      {"mean_f1", s.mean_f1},
              {"std_f1", s.std_f1},      {"per_run", per_run}};
}

inline RunSetReport run_set_from_json(const json& j) {
  RunSetReport rs;
  rs.backbone = j.at("backbone").get<std::string>();
  rs.variant = variant_from_string(j.at("variant").get<std::string>());
  for (const auto& rj : j.at("per_run")) rs.per_run.push_back(metrics_report_from_json(rj));
  return rs;
}

}  // namespace artgest::eval
