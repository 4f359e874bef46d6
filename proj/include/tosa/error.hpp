#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tosa {

enum class ErrorKind {
  degenerate_vector,
  invalid_dimension,
  invalid_size,
  shape,
  domain,
  index,
  incompatible_scores,
  reduction_too_large,
  invalid_plan,
  schedule_infeasible,
  format,
  truncation,
  non_finite,
  invalid_trace,
  io,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tosa
