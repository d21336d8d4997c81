#include "kspace/kernels/kde.hpp"

#include "kspace/error.hpp"

#include <omp.h>

#include <cmath>
#include <numbers>

namespace kspace::kernels {

Vector kde_evaluate(const Matrix& samples, const Eigen::MatrixXd& bandwidth_cov, const Matrix& grid) {
  const Eigen::Index d = samples.cols();
  if (d < 1 || d > 2 || bandwidth_cov.rows() != d || grid.cols() != d) {
    throw Error(ErrorKind::shape, "kde_evaluate supports 1-D and 2-D samples only");
  }
  const Eigen::MatrixXd inv = bandwidth_cov.inverse();
  const double det = bandwidth_cov.determinant();
  if (!(det > 0.0)) throw Error(ErrorKind::computation, "kde_evaluate: singular bandwidth");
  const double norm = 1.0 / (static_cast<double>(samples.rows()) *
                             std::pow(2.0 * std::numbers::pi, 0.5 * static_cast<double>(d)) * std::sqrt(det));
  const Eigen::Index g = grid.rows();
  const Eigen::Index n = samples.rows();
  Vector density(g);

#pragma omp parallel for schedule(static)
  for (Eigen::Index gi = 0; gi < g; ++gi) {
    double acc = 0.0;
    if (d == 1) {
      const double x = grid(gi, 0);
      const double s = inv(0, 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double u = x - samples(i, 0);
        acc += std::exp(-0.5 * s * u * u);
      }
    } else {
      const double x0 = grid(gi, 0), x1 = grid(gi, 1);
      const double s00 = inv(0, 0), s01 = inv(0, 1), s11 = inv(1, 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double u = x0 - samples(i, 0);
        const double v = x1 - samples(i, 1);
        acc += std::exp(-0.5 * (s00 * u * u + 2.0 * s01 * u * v + s11 * v * v));
      }
    }
    density[gi] = acc * norm;
  }
  return density;
}

}  // namespace kspace::kernels
