#pragma once

#include <algorithm>
#include <string>
#include <unordered_map>
#include <vector>

#include "artgest/core/error.hpp"

namespace artgest::data {

inline bool is_background_name(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return lower == "background";
}

/// Ordered class names with contiguous ids [0, C). When a background class
/// is present it always sits at id 0.
class LabelMap {
 public:
  LabelMap() = default;

  static LabelMap from_names(std::vector<std::string> names) {
    // background first, everything else keeps its given order
    std::stable_sort(names.begin(), names.end(), [](const auto& a, const auto& b) {
      return is_background_name(a) && !is_background_name(b);
    });
    LabelMap lm;
    for (auto& n : names) {
      require(!n.empty(), ErrorCode::InvalidArgument, "empty class name");
      require(!lm.index_.count(n), ErrorCode::InvalidArgument, "duplicate class name '" + n + "'");
      lm.index_[n] = static_cast<int>(lm.names_.size());
      lm.names_.push_back(std::move(n));
    }
    require(lm.size() >= 2, ErrorCode::InvalidArgument,
            "label map needs at least 2 classes, got " + std::to_string(lm.size()));
    return lm;
  }

  int size() const { return static_cast<int>(names_.size()); }

  const std::vector<std::string>& names() const { return names_; }

  const std::string& name_of(int id) const {
    require(id >= 0 && id < size(), ErrorCode::IdOutOfRange,
            "label id " + std::to_string(id));
    return names_[id];
  }

  /// -1 when the name is unknown.
  int index_of(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  bool has_background() const { return !names_.empty() && is_background_name(names_[0]); }

  bool operator==(const LabelMap& o) const { return names_ == o.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace artgest::data
