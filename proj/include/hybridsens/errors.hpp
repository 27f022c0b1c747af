#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hybridsens {

enum class ErrorKind {
  EvaluationFailure,
  SingularMatrix,
  SingularIterationMatrix,
  NewtonDivergence,
  MaxStepsExceeded,
  NoSignChange,
  SingularTransition,
  GrazingEvent,
  ChatteringLimit,
  DomainError,
  UnsupportedTransition,
  UnknownProblem,
  InvalidOverride,
  InvalidConfiguration,
};

std::string_view to_string(ErrorKind kind) noexcept;

class HybridError : public std::runtime_error {
 public:
  HybridError(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace hybridsens
