#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ccpt {

enum class ErrorKind {
  Shape,
  Parameter,
  Domain,
  Degenerate,
  Contract,
  Format,
  Corruption,
  Config,
  Generation,
  Metric,
  Usage,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Degenerate: return "degenerate-input error";
    case ErrorKind::Contract: return "contract error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Corruption: return "corruption error";
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::Generation: return "generation error";
    case ErrorKind::Metric: return "metric error";
    case ErrorKind::Usage: return "usage error";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

/// Every failure raised by the library carries a category so the CLI can
/// report it and choose an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ccpt
