#pragma once

#include <stdexcept>
#include <string>

namespace pbl {

enum class ErrorKind {
  format,
  integrity,
  config,
  vocabulary,
  capacity,
  numerical,
  data,
  label,
  template_error,
  undefined_metric,
  attribute,
  statistics,
  aggregation,
  sweep,
  compatibility,
};

const char* to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a kind so callers (and the
/// CLI's exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace pbl
