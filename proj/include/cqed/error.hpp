#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cqed {

/// Broad failure classes; the CLI maps them to exit codes.
enum class ErrorKind {
  Input,     ///< invalid parameters, malformed files, scope-guard violations
  Numerical  ///< singular systems, integration failure, non-convergence
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::Input, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

/// Malformed binary or text input; carries the byte offset of the first bad byte.
class ParseError : public InputError {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : InputError(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace cqed
