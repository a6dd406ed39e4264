#include "vitac/error.hpp"

#include "vitac/log.hpp"

#include <iostream>
#include <mutex>

namespace vitac {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DegenerateNeighborhood: return "DegenerateNeighborhood";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::TooFewExamples: return "TooFewExamples";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::EmptyContact: return "EmptyContact";
    case ErrorCode::MissingTargetData: return "MissingTargetData";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

namespace {

std::mutex g_log_mutex;
WarningHandler g_handler;

}  // namespace

void set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(g_log_mutex);
  g_handler = std::move(handler);
}

void warn(std::string_view message) {
  std::lock_guard lock(g_log_mutex);
  if (g_handler) {
    g_handler(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

}  // namespace vitac
