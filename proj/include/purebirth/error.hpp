#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace purebirth {

enum class ErrorKind {
  MissingParameter,
  OutOfRange,
  CapRequired,
  StateOutOfRange,
  WrongFamily,
  Divergent,
  RepeatedRates,
  ToleranceNotMet,
  Usage,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MissingParameter: return "MissingParameter";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::CapRequired: return "CapRequired";
    case ErrorKind::StateOutOfRange: return "StateOutOfRange";
    case ErrorKind::WrongFamily: return "WrongFamily";
    case ErrorKind::Divergent: return "Divergent";
    case ErrorKind::RepeatedRates: return "RepeatedRates";
    case ErrorKind::ToleranceNotMet: return "ToleranceNotMet";
    case ErrorKind::Usage: return "Usage";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the kinds above; the
/// message is prefixed with the kind name so CLI diagnostics stay greppable.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace purebirth
