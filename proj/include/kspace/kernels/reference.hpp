#pragma once

// Serial reference implementations of the parallel kernels. Straight loops
// with no tiling, kept for equivalence tests and the benchmark baseline.

#include "kspace/kernels/tsne_forces.hpp"
#include "kspace/types.hpp"

namespace kspace::kernels::reference {

double gaussian_kernel_sum(const Matrix& a, const Matrix& b, double gamma);

/// z_pᵀ K z_p for each indicator column, by direct double loop.
Vector gaussian_quadratic_forms(const Matrix& x, const Eigen::MatrixXd& z, double gamma);

Vector kde_evaluate(const Matrix& samples, const Eigen::MatrixXd& bandwidth_cov, const Matrix& grid);

/// Exact t-SNE gradient 4 Σ_j (p_ij - q_ij)(y_i - y_j)/(1 + ||y_i - y_j||²)
/// by O(n²) enumeration.
Matrix tsne_gradient(const SparseAffinities& p, const Matrix& y, double exaggeration);

}  // namespace kspace::kernels::reference
