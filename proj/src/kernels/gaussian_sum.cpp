#include "kspace/kernels/gaussian_sum.hpp"

#include "kspace/error.hpp"
#include "kspace/kernels/compensated.hpp"

#include <omp.h>

#include <algorithm>
#include <vector>

namespace kspace::kernels {
namespace {

// exp(-gamma * squared distance) for one tile, from norms and a GEMM.
void kernel_tile(const Matrix& a, Eigen::Index r0, Eigen::Index h, const Vector& a_norms,
                 const Matrix& b, Eigen::Index c0, Eigen::Index w, const Vector& b_norms,
                 double gamma, Eigen::MatrixXd& tile) {
  tile.resize(h, w);
  tile.noalias() = a.middleRows(r0, h) * b.middleRows(c0, w).transpose();
  for (Eigen::Index j = 0; j < w; ++j) {
    for (Eigen::Index i = 0; i < h; ++i) {
      const double d2 = std::max(0.0, a_norms[r0 + i] + b_norms[c0 + j] - 2.0 * tile(i, j));
      tile(i, j) = std::exp(-gamma * d2);
    }
  }
}

Vector row_norms(const Matrix& m) { return m.rowwise().squaredNorm(); }

}  // namespace

double gaussian_kernel_sum(const Matrix& a, const Matrix& b, double gamma) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorKind::shape, "kernel sum: feature widths differ (" + std::to_string(a.cols()) +
                                      " vs " + std::to_string(b.cols()) + ")");
  }
  const Vector an = row_norms(a);
  const Vector bn = row_norms(b);
  const Eigen::Index row_blocks = (a.rows() + kTileRows - 1) / kTileRows;
  std::vector<CompensatedSum> partial(static_cast<std::size_t>(row_blocks));

#pragma omp parallel
  {
    Eigen::MatrixXd tile;
#pragma omp for schedule(dynamic)
    for (Eigen::Index rb = 0; rb < row_blocks; ++rb) {
      const Eigen::Index r0 = rb * kTileRows;
      const Eigen::Index h = std::min(kTileRows, a.rows() - r0);
      CompensatedSum acc;
      for (Eigen::Index c0 = 0; c0 < b.rows(); c0 += kTileCols) {
        const Eigen::Index w = std::min(kTileCols, b.rows() - c0);
        kernel_tile(a, r0, h, an, b, c0, w, bn, gamma, tile);
        acc.add(tile.sum());
      }
      partial[static_cast<std::size_t>(rb)] = acc;
    }
  }

  CompensatedSum total;
  for (const auto& p : partial) total.add(p.value());
  return total.value();
}

QuadraticForms gaussian_quadratic_forms(const Matrix& x, const Eigen::MatrixXd& z, double gamma) {
  if (z.rows() != x.rows()) throw Error(ErrorKind::shape, "quadratic forms: indicator rows != samples");
  const Eigen::Index n = x.rows();
  const Eigen::Index p = z.cols();
  const Vector norms = row_norms(x);
  const Eigen::Index row_blocks = (n + kTileRows - 1) / kTileRows;
  std::vector<Vector> block_quad(static_cast<std::size_t>(row_blocks));

  QuadraticForms out;
  out.row_sums = Vector::Zero(n);

#pragma omp parallel
  {
    Eigen::MatrixXd tile;
    Eigen::MatrixXd weighted;
#pragma omp for schedule(dynamic)
    for (Eigen::Index rb = 0; rb < row_blocks; ++rb) {
      const Eigen::Index r0 = rb * kTileRows;
      const Eigen::Index h = std::min(kTileRows, n - r0);
      Vector quad = Vector::Zero(p);
      for (Eigen::Index c0 = 0; c0 < n; c0 += kTileCols) {
        const Eigen::Index w = std::min(kTileCols, n - c0);
        kernel_tile(x, r0, h, norms, x, c0, w, norms, gamma, tile);
        weighted.noalias() = tile * z.middleRows(c0, w);
        quad += z.middleRows(r0, h).cwiseProduct(weighted).colwise().sum().transpose();
        out.row_sums.segment(r0, h) += tile.rowwise().sum();
      }
      block_quad[static_cast<std::size_t>(rb)] = std::move(quad);
    }
  }

  out.quad = Vector::Zero(p);
  for (const auto& q : block_quad) out.quad += q;
  CompensatedSum total;
  for (Eigen::Index i = 0; i < n; ++i) total.add(out.row_sums[i]);
  out.total = total.value();
  return out;
}

}  // namespace kspace::kernels
