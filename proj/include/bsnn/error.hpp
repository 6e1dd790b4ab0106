#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bsnn {

enum class ErrorCode {
  invalid_argument,
  shape_mismatch,
  wrong_magic,
  truncated,
  count_mismatch,
  insufficient_samples,
  placement_failed,
  constraint_violation,
  non_finite,
  degenerate,
  io,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::wrong_magic: return "wrong_magic";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::count_mismatch: return "count_mismatch";
    case ErrorCode::insufficient_samples: return "insufficient_samples";
    case ErrorCode::placement_failed: return "placement_failed";
    case ErrorCode::constraint_violation: return "constraint_violation";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

}  // namespace bsnn
