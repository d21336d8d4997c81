#include "kspace/kernels/reference.hpp"

#include "kspace/error.hpp"
#include "kspace/kernels/compensated.hpp"

#include <cmath>
#include <numbers>

namespace kspace::kernels::reference {

double gaussian_kernel_sum(const Matrix& a, const Matrix& b, double gamma) {
  if (a.cols() != b.cols()) throw Error(ErrorKind::shape, "kernel sum: feature widths differ");
  CompensatedSum total;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      double d2 = 0.0;
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        const double diff = a(i, c) - b(j, c);
        d2 += diff * diff;
      }
      total.add(std::exp(-gamma * d2));
    }
  }
  return total.value();
}

Vector gaussian_quadratic_forms(const Matrix& x, const Eigen::MatrixXd& z, double gamma) {
  Vector quad = Vector::Zero(z.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      const double k = std::exp(-gamma * (x.row(i) - x.row(j)).squaredNorm());
      for (Eigen::Index p = 0; p < z.cols(); ++p) quad[p] += z(i, p) * k * z(j, p);
    }
  }
  return quad;
}

Vector kde_evaluate(const Matrix& samples, const Eigen::MatrixXd& bandwidth_cov, const Matrix& grid) {
  const Eigen::Index d = samples.cols();
  const Eigen::MatrixXd inv = bandwidth_cov.inverse();
  const double norm = 1.0 / (static_cast<double>(samples.rows()) *
                             std::pow(2.0 * std::numbers::pi, 0.5 * static_cast<double>(d)) *
                             std::sqrt(bandwidth_cov.determinant()));
  Vector density(grid.rows());
  for (Eigen::Index g = 0; g < grid.rows(); ++g) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
      const Eigen::VectorXd u = (grid.row(g) - samples.row(i)).transpose();
      acc += std::exp(-0.5 * u.dot(inv * u));
    }
    density[g] = acc * norm;
  }
  return density;
}

Matrix tsne_gradient(const SparseAffinities& p, const Matrix& y, double exaggeration) {
  const Eigen::Index n = y.rows();
  double z = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) z += 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
    }
  }
  Eigen::MatrixXd dense_p = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (auto e = p.row_ptr[i]; e < p.row_ptr[i + 1]; ++e) {
      dense_p(i, p.cols[static_cast<std::size_t>(e)]) = exaggeration * p.vals[static_cast<std::size_t>(e)];
    }
  }
  Matrix grad = Matrix::Zero(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const Eigen::RowVector2d diff = y.row(i) - y.row(j);
      const double w = 1.0 / (1.0 + diff.squaredNorm());
      grad.row(i) += 4.0 * (dense_p(i, j) - w / z) * w * diff;
    }
  }
  return grad;
}

}  // namespace kspace::kernels::reference
