#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mae {

enum class ErrorKind {
  Shape,
  Numeric,
  Capability,
  Parameter,
  Parse,
  Connectivity,
  Validation,
  Io,
  DegenerateInput,
  GenerationExhausted,
  Divergence,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return "shape_error";
    case ErrorKind::Numeric: return "numeric_error";
    case ErrorKind::Capability: return "capability_error";
    case ErrorKind::Parameter: return "parameter_error";
    case ErrorKind::Parse: return "parse_error";
    case ErrorKind::Connectivity: return "connectivity_error";
    case ErrorKind::Validation: return "validation_error";
    case ErrorKind::Io: return "io_error";
    case ErrorKind::DegenerateInput: return "degenerate_input";
    case ErrorKind::GenerationExhausted: return "generation_exhausted";
    case ErrorKind::Divergence: return "divergence";
  }
  return "error";
}

/// Library-wide exception. The kind is what the CLI reports in its error JSON.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace mae
