#pragma once

#include <stdexcept>
#include <string>

namespace pintent {

/// Failure categories. The CLI maps each one to a fixed process exit code.
enum class ErrorKind {
  invalid_argument,
  dimension_mismatch,
  io,
  parse,
  schema_version,
  divergence,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::io: return "io";
    case ErrorKind::parse: return "parse";
    case ErrorKind::schema_version: return "schema_version";
    case ErrorKind::divergence: return "divergence";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Training produced a non-finite loss. Random search records these as
/// constraint violations instead of aborting.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(ErrorKind::divergence, what) {}
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::invalid_argument, what);
}

inline void require_dims(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::dimension_mismatch, what);
}

}  // namespace pintent
