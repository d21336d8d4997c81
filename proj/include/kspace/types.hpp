#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string_view>

namespace kspace {

/// Row-major dense matrix; rows are tokens, columns are features.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Modality : std::uint8_t {
  text = 0,
  image = 1,
  other = 2,
};

inline bool is_valid_modality(std::uint8_t code) { return code <= 2; }

inline std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::text: return "text";
    case Modality::image: return "image";
    case Modality::other: return "other";
  }
  return "unknown";
}

}  // namespace kspace
