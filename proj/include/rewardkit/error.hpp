#pragma once

#include <stdexcept>
#include <string>

namespace rewardkit {

// Domain error categories. These map to CLI exit code 1.
enum class ErrorKind {
  InsufficientData,
  SchemaMismatch,
  DegenerateTotal,
  DegenerateRubric,
  EmptyInput,
  InvalidSpan,
  Misuse,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InsufficientData: return "insufficient_data";
    case ErrorKind::SchemaMismatch:   return "schema_mismatch";
    case ErrorKind::DegenerateTotal:  return "degenerate_total";
    case ErrorKind::DegenerateRubric: return "degenerate_rubric";
    case ErrorKind::EmptyInput:       return "empty_input";
    case ErrorKind::InvalidSpan:      return "invalid_span";
    case ErrorKind::Misuse:           return "misuse";
  }
  return "unknown";
}

// Violated precondition or degenerate data inside an otherwise
// well-formed request.
class DomainError : public std::runtime_error {
 public:
  DomainError(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Malformed input file, config, or command line. Maps to CLI exit code 2.
// line() is 1-based when the error is tied to a specific input line,
// 0 otherwise.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& message, std::size_t line = 0)
      : std::runtime_error(message), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace rewardkit
