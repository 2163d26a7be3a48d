#pragma once

#include <stdexcept>
#include <string>

namespace slotforge {

// Exit codes used by the command-line front end.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kDataFormat = 3,
  kNumeric = 4,
  kIo = 5,
};

class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Violated preconditions: shape mismatches, invalid indices, bad arguments.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what)
      : Error(what, ExitCode::kDataFormat) {}
};

/// Malformed or truncated files.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what)
      : Error(what, ExitCode::kDataFormat) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(what, ExitCode::kNumeric) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what, ExitCode::kIo) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what)
      : Error(what, ExitCode::kUsage) {}
};

}  // namespace slotforge
