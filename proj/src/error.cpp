#include "amimic/error.hpp"

namespace amimic {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    case ErrorKind::invalid_input: return "invalid_input";
    case ErrorKind::unusable: return "unusable";
    case ErrorKind::numeric: return "numeric";
  }
  return "unknown";
}

}  // namespace amimic
