#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tracelab {

// Malformed or inconsistent configuration. CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A pipeline stage input artifact is absent. CLI maps this to exit code 3.
struct MissingInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Data violates a documented invariant or operation precondition. Exit code 4.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Instruction generation could not satisfy its guarantees with the given catalog.
struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Line-oriented parse failure; carries the 1-based line number.
struct ParseError : std::runtime_error {
  ParseError(std::size_t line_no, const std::string& message)
      : std::runtime_error("line " + std::to_string(line_no) + ": " + message),
        line(line_no) {}
  std::size_t line;
};

}  // namespace tracelab
