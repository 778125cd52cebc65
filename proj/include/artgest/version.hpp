#pragma once

namespace artgest {

inline constexpr const char* kVersion = "0.1.0";

/// Checkpoint / archive format revision. Bump on any layout change.
inline constexpr int kCheckpointFormatVersion = 1;

}  // namespace artgest
