#include "pbl/error.hpp"

namespace pbl {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::format: return "format error";
    case ErrorKind::integrity: return "integrity error";
    case ErrorKind::config: return "config error";
    case ErrorKind::vocabulary: return "vocabulary error";
    case ErrorKind::capacity: return "capacity error";
    case ErrorKind::numerical: return "numerical error";
    case ErrorKind::data: return "data error";
    case ErrorKind::label: return "label error";
    case ErrorKind::template_error: return "template error";
    case ErrorKind::undefined_metric: return "undefined-metric error";
    case ErrorKind::attribute: return "attribute error";
    case ErrorKind::statistics: return "statistics error";
    case ErrorKind::aggregation: return "aggregation error";
    case ErrorKind::sweep: return "sweep error";
    case ErrorKind::compatibility: return "compatibility error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace pbl
