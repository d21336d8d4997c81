#pragma once

// Per-layer conditioning: per-dimension standardization over the pooled
// tokens of one layer, then PCA to at most k components.

#include "kspace/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace kspace {

inline constexpr int kDefaultPcaComponents = 50;

struct StandardizeStats {
  std::vector<double> means;
  std::vector<double> stds;          // population convention; 1.0 for degenerate columns
  std::vector<std::uint8_t> degenerate;  // 1 where the column has zero variance

  std::size_t dim() const { return means.size(); }
  std::size_t degenerate_count() const;
};

struct Standardized {
  Matrix values;
  StandardizeStats stats;
};

Standardized standardize(const Matrix& x);

/// Applies previously fitted statistics.
Matrix apply_standardize(const StandardizeStats& stats, const Matrix& x);

struct PcaModel {
  Matrix components;                      // k x dim, orthonormal rows
  std::vector<double> explained_variance;  // length k, non-increasing
  std::vector<double> center;              // length dim
  double total_variance = 0.0;             // trace of the covariance

  int k() const { return static_cast<int>(components.rows()); }
  int dim() const { return static_cast<int>(components.cols()); }
  double retained_fraction() const;
};

/// Effective k is min(k, T-1, dim). Each component's largest-magnitude
/// coefficient is positive.
PcaModel pca_fit(const Matrix& xs, int k = kDefaultPcaComponents);

Matrix pca_transform(const PcaModel& model, const Matrix& xs);

/// Maps reduced coordinates back into the standardized space.
Matrix pca_inverse_transform(const PcaModel& model, const Matrix& z);

struct PreprocessResult {
  StandardizeStats stats;
  PcaModel model;
  Matrix reduced;  // T x k
};

PreprocessResult preprocess_layer(const Matrix& x, int k = kDefaultPcaComponents);

// Sidecar layout, little-endian:
//   "PCA1" | u32 dim | u32 k | f64 center[dim] | f64 means[dim] | f64 stds[dim]
//   | f64 explained_variance[k] | f64 components[k*dim] row-major
//   | u8 degenerate bitmap[ceil(dim/8)], bit j%8 of byte j/8 set for column j
void write_pca_sidecar(const std::filesystem::path& path, const StandardizeStats& stats,
                       const PcaModel& model);

struct PcaSidecar {
  StandardizeStats stats;
  PcaModel model;
};
PcaSidecar read_pca_sidecar(const std::filesystem::path& path);

}  // namespace kspace
