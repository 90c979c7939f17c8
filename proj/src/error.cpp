#include "gmml/error.hpp"

namespace gmml {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::dimension_mismatch: return "dimension mismatch";
    case ErrorCode::class_not_represented: return "class not represented";
    case ErrorCode::singleton_class: return "singleton class";
    case ErrorCode::insufficient_data: return "insufficient data";
    case ErrorCode::bad_magic: return "bad magic";
    case ErrorCode::unsupported_version: return "unsupported version";
    case ErrorCode::truncated_payload: return "truncated payload";
    case ErrorCode::crc_mismatch: return "crc mismatch";
    case ErrorCode::io_failure: return "io failure";
    case ErrorCode::parse_failure: return "parse failure";
  }
  return "unknown";
}

}  // namespace gmml
