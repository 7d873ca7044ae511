#pragma once

#include <stdexcept>
#include <string>

namespace asplat {

// Mirrors asplat_status in asplat.h; the C layer maps one to the other.
enum class ErrorCode {
  kInvalidArgument = 1,
  kInvalidDepth,
  kNumeric,
  kEmptyAnchors,
  kInvalidBudget,
  kParse,
  kContract,
  kDivergence,
  kUndefinedMetric,
  kIo,
  kConfig,
  kMissingCheckpoint,
  kPrecondition,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace asplat
