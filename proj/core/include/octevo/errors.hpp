#pragma once

#include <stdexcept>
#include <string>

namespace octevo {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape / size mismatches between tensors or between a tensor and an op.
struct DimensionError : Error { using Error::Error; };
// Bad scalar argument (negative stride, window not dividing the extent, ...).
struct ParameterError : Error { using Error::Error; };
// Surface tables or cube geometry violating their invariants.
struct PreprocError : Error { using Error::Error; };
// Unreadable / truncated / malformed files.
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
// Split-protocol violations (leakage, missing warm-start checkpoint, ...).
struct ProtocolError : Error { using Error::Error; };
// Non-finite losses or gradients during optimization.
struct TrainingError : Error { using Error::Error; };

inline void check_arg(bool ok, const std::string& msg) {
  if (!ok) throw ParameterError(msg);
}
inline void check_dim(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

}  // namespace octevo
