#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace robust {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand lengths disagree, or a vector is empty where one entry is required.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class UnsupportedActivation : public Error {
 public:
  using Error::Error;
};

/// The top two logits are equal, so "the" predicted class is not unique.
class AmbiguousLabel : public Error {
 public:
  using Error::Error;
};

/// Oracle lacks the access level an operation needs (e.g. scores from a label-only oracle).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

class IncompatibleMethod : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::string source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what),
        source_(std::move(source)),
        line_(line) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

}  // namespace robust
