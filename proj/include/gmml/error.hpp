#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gmml {

/// Stable error categories. File-format failures get distinct codes so callers
/// can tell corruption kinds apart without parsing messages.
enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  class_not_represented,
  singleton_class,
  insufficient_data,
  bad_magic,
  unsupported_version,
  truncated_payload,
  crc_mismatch,
  io_failure,
  parse_failure,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gmml
