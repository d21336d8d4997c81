#include "kspace/error.hpp"

namespace kspace {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::validation: return "validation";
    case ErrorKind::format: return "format";
    case ErrorKind::truncation: return "truncation";
    case ErrorKind::missing_file: return "missing-file";
    case ErrorKind::dim_mismatch: return "dim-mismatch";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::shape: return "shape";
    case ErrorKind::wrong_path: return "wrong-path";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::computation: return "computation";
    case ErrorKind::io: return "io";
    case ErrorKind::distribution: return "distribution";
  }
  return "unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage:
    case ErrorKind::parameter:
      return 2;
    case ErrorKind::validation:
    case ErrorKind::format:
    case ErrorKind::truncation:
    case ErrorKind::missing_file:
    case ErrorKind::dim_mismatch:
    case ErrorKind::insufficient_data:
    case ErrorKind::shape:
    case ErrorKind::wrong_path:
    case ErrorKind::unsupported:
      return 3;
    case ErrorKind::computation:
      return 4;
    case ErrorKind::io:
    case ErrorKind::distribution:
      return 5;
  }
  return 4;
}

}  // namespace kspace
