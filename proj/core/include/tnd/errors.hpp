#pragma once

#include <stdexcept>
#include <string>

namespace tnd {

/// Failure categories. Each maps onto one CLI exit code.
enum class ErrorKind {
  usage,      ///< bad arguments or configuration
  shape,      ///< tensor or layer shape mismatch
  format,     ///< unreadable or malformed file
  version,    ///< file written by a newer format revision
  truncated,  ///< file ended before the declared payload
  data,       ///< dataset contents violate a precondition
  numerical,  ///< non-finite value or divergence
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorKind::format, what) {}
};

class VersionError : public Error {
 public:
  explicit VersionError(const std::string& what) : Error(ErrorKind::version, what) {}
};

class TruncatedError : public Error {
 public:
  explicit TruncatedError(const std::string& what) : Error(ErrorKind::truncated, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

/// 0 success, 1 usage, 2 data/model format, 3 numerical.
inline int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage:
      return 1;
    case ErrorKind::shape:
    case ErrorKind::format:
    case ErrorKind::version:
    case ErrorKind::truncated:
    case ErrorKind::data:
      return 2;
    case ErrorKind::numerical:
      return 3;
  }
  return 1;
}

}  // namespace tnd
