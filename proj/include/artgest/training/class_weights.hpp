#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <vector>

#include "artgest/core/tensor.hpp"
#include "artgest/data/label_map.hpp"

namespace artgest::training {

enum class ClassWeighting { none, inverse_frequency, effective_number };

inline const char* to_string(ClassWeighting w) {
  switch (w) {
    case ClassWeighting::none: return "none";
    case ClassWeighting::inverse_frequency: return "inverse_frequency";
    case ClassWeighting::effective_number: return "effective_number";
  }
  return "?";
}

inline ClassWeighting class_weighting_from_string(const std::string& s) {
  if (s == "none") return ClassWeighting::none;
  if (s == "inverse_frequency") return ClassWeighting::inverse_frequency;
  if (s == "effective_number") return ClassWeighting::effective_number;
  fail(ErrorCode::InvalidArgument, "unknown class weighting '" + s + "'");
}

/// Per-class loss weights, mean-normalized to 1.
struct ClassWeights {
  Tensor w;  // [C], all positive

  double mean() const { return w.sum() / w.numel(); }
};

/// none: all ones. inverse_frequency: w_i ∝ total / (C * count_i).
/// effective_number: w_i ∝ (1 - b) / (1 - b^count_i) with b = 0.999.
/// Zero-count classes take the largest computed weight; the result is
/// normalized so mean(w) = 1.
inline ClassWeights compute_class_weights(const std::vector<int64_t>& counts,
                                          ClassWeighting scheme) {
  const int64_t c = static_cast<int64_t>(counts.size());
  require(c >= 1, ErrorCode::InvalidArgument, "no classes");
  int64_t total = 0;
  for (int64_t n : counts) total += n;
  require(total > 0, ErrorCode::AllZeroCounts, "every class count is zero");

  ClassWeights out;
  out.w = Tensor::ones({c});
  if (scheme == ClassWeighting::none) return out;

  double max_w = 0.0;
  std::vector<double> raw(c, -1.0);
  for (int64_t i = 0; i < c; ++i) {
    if (counts[i] <= 0) continue;
    if (scheme == ClassWeighting::inverse_frequency) {
      raw[i] = static_cast<double>(total) / (static_cast<double>(c) * counts[i]);
    } else {
      constexpr double b = 0.999;
      raw[i] = (1.0 - b) / (1.0 - std::pow(b, static_cast<double>(counts[i])));
    }
    max_w = std::max(max_w, raw[i]);
  }
  double sum = 0.0;
  for (int64_t i = 0; i < c; ++i) {
    if (raw[i] < 0.0) raw[i] = max_w;
    sum += raw[i];
  }
  const double norm = static_cast<double>(c) / sum;  // mean -> 1
  for (int64_t i = 0; i < c; ++i) out.w[i] = static_cast<float>(raw[i] * norm);
  return out;
}

/// Convenience: counts in label-id order from a name -> count distribution.
inline std::vector<int64_t> counts_in_label_order(const std::map<std::string, int64_t>& dist,
                                                  const data::LabelMap& labels) {
  std::vector<int64_t> counts(labels.size(), 0);
  for (const auto& [name, count] : dist) {
    const int id = labels.index_of(name);
    require(id >= 0, ErrorCode::UnknownLabel, "class '" + name + "'");
    counts[id] = count;
  }
  return counts;
}

}  // namespace artgest::training
