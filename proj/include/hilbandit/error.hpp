#pragma once

#include <stdexcept>
#include <string>

namespace hilbandit {

enum class ErrorKind {
  NotPositiveDefinite,
  SingularSystem,
  IterationLimit,
  DimensionMismatch,
  HistoryWidthMismatch,
  NonMonotoneTimes,
  InsufficientGroups,
  ParseError,
  SchemaVersionMismatch,
  UnknownContext,
  EpisodeFinished,
  EmptyTrace,
  AllZeroDiffs,
  ConfigError,
  IoError,
  WrongPhase,
  InvalidAction,
  UnknownSession,
  CapacityExceeded,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace hilbandit
