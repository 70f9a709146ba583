#pragma once

#include <stdexcept>
#include <string>

namespace voxmem {

// Error hierarchy shared by the library and the CLI. The CLI maps the
// exit_code of an escaped error to the process exit status:
//   1  usage / configuration
//   2  I/O and file formats
//   3  numeric / contract violations
class Error : public std::runtime_error {
 public:
  Error(const std::string& msg, int exit_code)
      : std::runtime_error(msg), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& msg) : Error(msg, 1) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg, 1) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg, 2) {}
};

// Malformed binary file; message carries the byte offset of the failure.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(msg, 2) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error(msg, 3) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(msg, 3) {}
};

class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& msg) : Error(msg, 3) {}
};

class EmptyBankError : public Error {
 public:
  explicit EmptyBankError(const std::string& msg) : Error(msg, 3) {}
};

class EmptySurfaceError : public Error {
 public:
  explicit EmptySurfaceError(const std::string& msg) : Error(msg, 3) {}
};

class GenerationError : public Error {
 public:
  explicit GenerationError(const std::string& msg) : Error(msg, 3) {}
};

}  // namespace voxmem
