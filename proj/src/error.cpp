#include "tosa/error.hpp"

namespace tosa {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::degenerate_vector: return "degenerate vector";
    case ErrorKind::invalid_dimension: return "invalid dimension";
    case ErrorKind::invalid_size: return "invalid size";
    case ErrorKind::shape: return "shape mismatch";
    case ErrorKind::domain: return "domain error";
    case ErrorKind::index: return "index out of range";
    case ErrorKind::incompatible_scores: return "incompatible scores";
    case ErrorKind::reduction_too_large: return "reduction too large";
    case ErrorKind::invalid_plan: return "invalid merge plan";
    case ErrorKind::schedule_infeasible: return "schedule infeasible";
    case ErrorKind::format: return "format error";
    case ErrorKind::truncation: return "truncated input";
    case ErrorKind::non_finite: return "non-finite value";
    case ErrorKind::invalid_trace: return "invalid trace";
    case ErrorKind::io: return "i/o error";
  }
  return "error";
}

}  // namespace tosa
