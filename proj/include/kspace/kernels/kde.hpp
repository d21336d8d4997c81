#pragma once

#include "kspace/types.hpp"

namespace kspace::kernels {

/// Gaussian KDE with full bandwidth covariance `bandwidth_cov` (d x d, d <= 2)
/// evaluated at each grid row. Parallel over grid points; each point sums its
/// samples in order.
Vector kde_evaluate(const Matrix& samples, const Eigen::MatrixXd& bandwidth_cov, const Matrix& grid);

}  // namespace kspace::kernels
