#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "artgest/core/error.hpp"
#include "artgest/variant.hpp"

namespace artgest::eval {

/// Row = true class, column = predicted class.
struct ConfusionMatrix {
  int64_t num_classes = 0;
  std::vector<int64_t> counts;  // row-major C x C

  explicit ConfusionMatrix(int64_t c = 0) : num_classes(c), counts(c * c, 0) {}

  int64_t& at(int64_t true_c, int64_t pred_c) { return counts[true_c * num_classes + pred_c]; }
  int64_t at(int64_t true_c, int64_t pred_c) const {
    return counts[true_c * num_classes + pred_c];
  }

  int64_t total() const {
    int64_t s = 0;
    for (int64_t v : counts) s += v;
    return s;
  }

  int64_t row_sum(int64_t i) const {
    int64_t s = 0;
    for (int64_t j = 0; j < num_classes; ++j) s += at(i, j);
    return s;
  }

  int64_t col_sum(int64_t j) const {
    int64_t s = 0;
    for (int64_t i = 0; i < num_classes; ++i) s += at(i, j);
    return s;
  }
};

inline ConfusionMatrix confusion_matrix(const std::vector<int>& preds,
                                        const std::vector<int>& labels, int64_t num_classes) {
  require(preds.size() == labels.size(), ErrorCode::LengthMismatch,
          "preds " + std::to_string(preds.size()) + " vs labels " +
              std::to_string(labels.size()));
  ConfusionMatrix cm(num_classes);
  for (size_t i = 0; i < preds.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < num_classes, ErrorCode::IdOutOfRange,
            "label id " + std::to_string(labels[i]));
    require(preds[i] >= 0 && preds[i] < num_classes, ErrorCode::IdOutOfRange,
            "pred id " + std::to_string(preds[i]));
    ++cm.at(labels[i], preds[i]);
  }
  return cm;
}

/// 0/0 resolves to 0 everywhere (empty class or empty prediction column).
inline std::vector<double> per_class_precision(const ConfusionMatrix& cm) {
  std::vector<double> p(cm.num_classes, 0.0);
  for (int64_t i = 0; i < cm.num_classes; ++i) {
    const int64_t col = cm.col_sum(i);
    p[i] = col > 0 ? static_cast<double>(cm.at(i, i)) / col : 0.0;
  }
  return p;
}

inline std::vector<double> per_class_recall(const ConfusionMatrix& cm) {
  std::vector<double> r(cm.num_classes, 0.0);
  for (int64_t i = 0; i < cm.num_classes; ++i) {
    const int64_t row = cm.row_sum(i);
    r[i] = row > 0 ? static_cast<double>(cm.at(i, i)) / row : 0.0;
  }
  return r;
}

inline std::vector<double> per_class_f1(const ConfusionMatrix& cm) {
  const auto p = per_class_precision(cm);
  const auto r = per_class_recall(cm);
  std::vector<double> f1(cm.num_classes, 0.0);
  for (int64_t i = 0; i < cm.num_classes; ++i)
    f1[i] = (p[i] + r[i]) > 0.0 ? 2.0 * p[i] * r[i] / (p[i] + r[i]) : 0.0;
  return f1;
}

/// Unweighted mean of per-class F1 over all classes, zero-support included.
inline double macro_f1(const ConfusionMatrix& cm) {
  const auto f1 = per_class_f1(cm);
  double s = 0.0;
  for (double v : f1) s += v;
  return f1.empty() ? 0.0 : s / static_cast<double>(f1.size());
}

/// Support-weighted mean of per-class F1 (comparison metric only).
inline double weighted_f1(const ConfusionMatrix& cm) {
  const auto f1 = per_class_f1(cm);
  double s = 0.0;
  int64_t total = 0;
  for (int64_t i = 0; i < cm.num_classes; ++i) {
    s += f1[i] * cm.row_sum(i);
    total += cm.row_sum(i);
  }
  return total > 0 ? s / total : 0.0;
}

struct AggregateStats {
  double mean = 0.0;
  double std = 0.0;
  bool single_run = false;
};

/// Arithmetic mean and sample standard deviation (n-1 denominator).
/// A single value is reported with std 0 and the single_run flag set.
inline AggregateStats aggregate_runs(const std::vector<double>& values) {
  require(!values.empty(), ErrorCode::EmptyInput, "aggregate_runs: no values");
  AggregateStats out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() == 1) {
    out.single_run = true;
    return out;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return out;
}

/// Full metric set for one evaluation run.
struct MetricsReport {
  std::vector<double> per_class_precision;
  std::vector<double> per_class_recall;
  std::vector<double> per_class_f1;
  std::vector<int64_t> support;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  ConfusionMatrix confusion{0};
  std::string run_id;
  uint64_t seed = 0;
  Variant variant = Variant::with_context;
};

inline MetricsReport make_report(const ConfusionMatrix& cm, std::string run_id, uint64_t seed,
                                 Variant variant) {
  MetricsReport r;
  r.per_class_precision = per_class_precision(cm);
  r.per_class_recall = per_class_recall(cm);
  r.per_class_f1 = per_class_f1(cm);
  r.support.resize(cm.num_classes);
  for (int64_t i = 0; i < cm.num_classes; ++i) r.support[i] = cm.row_sum(i);
  r.macro_f1 = macro_f1(cm);
  r.weighted_f1 = weighted_f1(cm);
  r.confusion = cm;
  r.run_id = std::move(run_id);
  r.seed = seed;
  r.variant = variant;
  return r;
}

}  // namespace artgest::eval
