#pragma once

#include <string>

#include "artgest/core/error.hpp"

namespace artgest {

/// Which classifier configuration a model or report refers to: the full
/// two-stream network, or the crop-only baseline with the context branch
/// removed.
enum class Variant { with_context, without_context };

inline const char* to_string(Variant v) {
  return v == Variant::with_context ? "with_context" : "without_context";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "with_context") return Variant::with_context;
  if (s == "without_context") return Variant::without_context;
  fail(ErrorCode::InvalidArgument, "unknown variant '" + s + "'");
}

}  // namespace artgest
