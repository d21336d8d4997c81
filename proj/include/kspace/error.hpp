#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kspace {

enum class ErrorKind {
  usage,
  parameter,
  validation,
  format,
  truncation,
  missing_file,
  dim_mismatch,
  insufficient_data,
  shape,
  wrong_path,
  unsupported,
  computation,
  io,
  distribution,
};

std::string_view to_string(ErrorKind kind);

/// CLI exit code for an error category: 2 usage, 3 validation, 4 computation, 5 I/O.
int exit_code_for(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace kspace
