#pragma once

// Tiled Gaussian-kernel reductions. Kernel matrices are never materialized;
// each tile is reduced in place. Row-block partials are combined serially in
// block order with compensated summation, so results are bit-identical for
// any OpenMP thread count.

#include "kspace/types.hpp"

namespace kspace::kernels {

inline constexpr Eigen::Index kTileRows = 256;
inline constexpr Eigen::Index kTileCols = 256;

/// Σ_i Σ_j exp(-gamma * ||a_i - b_j||²).
double gaussian_kernel_sum(const Matrix& a, const Matrix& b, double gamma);

struct QuadraticForms {
  Vector quad;      // per indicator column p: z_pᵀ K z_p
  Vector row_sums;  // K 1
  double total = 0.0;
};

/// For the pooled kernel K(x, x) and indicator columns z (N x P, entries 0/1),
/// computes every z_pᵀ K z_p in one pass over the kernel tiles.
QuadraticForms gaussian_quadratic_forms(const Matrix& x, const Eigen::MatrixXd& z, double gamma);

}  // namespace kspace::kernels
