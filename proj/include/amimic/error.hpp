#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace amimic {

enum class ErrorKind {
  io,             // file could not be opened, read or written
  format,         // malformed input file
  invalid_input,  // precondition violated by the caller
  unusable,       // data exists but cannot support the request (no contexts, formless, ...)
  numeric,        // non-finite values or failed numerical routine
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library. The kind lets the CLI emit a stable,
/// machine-parseable error line.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace amimic
