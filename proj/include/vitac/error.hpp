#pragma once

#include <stdexcept>
#include <string>

namespace vitac {

enum class ErrorCode {
  InvalidArgument,
  DegenerateNeighborhood,
  TooFewPoints,
  KindMismatch,
  RankDeficient,
  DimensionMismatch,
  SingleClass,
  EmptyTestSet,
  TooFewExamples,
  UnknownClass,
  EmptyContact,
  MissingTargetData,
  EmptyCloud,
  Io,
  Parse,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can dispatch on the kind instead of the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const char* message) {
  if (!condition) fail(code, message);
}

}  // namespace vitac
