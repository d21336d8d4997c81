#include "kspace/preprocess.hpp"

#include "kspace/error.hpp"

#include <omp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace kspace {
namespace {

constexpr Eigen::Index kRowBlock = 256;
constexpr Eigen::Index kColBlock = 64;

void require_finite(const Matrix& x, const char* what) {
  if (!x.allFinite()) throw Error(ErrorKind::validation, std::string(what) + ": non-finite input");
}

// C = Xcᵀ Xc, computed in fixed column blocks so the result does not depend
// on the number of threads.
Matrix scatter_matrix(const Matrix& xc) {
  const Eigen::Index d = xc.cols();
  Eigen::MatrixXd c(d, d);
  const Eigen::Index blocks = (d + kColBlock - 1) / kColBlock;
  const Eigen::MatrixXd xcm = xc;  // column-major copy for contiguous column panels
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const Eigen::Index j0 = b * kColBlock;
    const Eigen::Index w = std::min(kColBlock, d - j0);
    c.middleCols(j0, w).noalias() = xcm.transpose() * xcm.middleCols(j0, w);
  }
  // Symmetrize exactly; the blocks see different panel shapes.
  Matrix sym = 0.5 * (c + c.transpose());
  return sym;
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ofstream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

class ByteReader {
 public:
  explicit ByteReader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(ErrorKind::truncation, "PCA sidecar truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  const unsigned char* data() const { return bytes_.data(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void skip(std::size_t n) { need(n); pos_ += n; }

 private:
  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t StandardizeStats::degenerate_count() const {
  return static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), 1));
}

Standardized standardize(const Matrix& x) {
  if (x.rows() < 2) {
    throw Error(ErrorKind::insufficient_data, "standardize needs at least 2 tokens, got " +
                                                  std::to_string(x.rows()));
  }
  require_finite(x, "standardize");
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();

  Vector mean = Vector::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) mean += x.row(i).transpose();
  mean /= static_cast<double>(n);

  Vector var = Vector::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) var += (x.row(i).transpose() - mean).array().square().matrix();
  var /= static_cast<double>(n);

  Standardized out;
  auto& st = out.stats;
  st.means.assign(mean.data(), mean.data() + d);
  st.stds.resize(d);
  st.degenerate.assign(d, 0);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double s = std::sqrt(var[j]);
    // Constant columns leave rounding residue around 1e-16 * |mean|.
    if (!(s > 1e-12 * std::max(1.0, std::abs(mean[j])))) {
      st.stds[j] = 1.0;
      st.degenerate[j] = 1;
    } else {
      st.stds[j] = s;
    }
  }
  out.values = apply_standardize(st, x);
  return out;
}

Matrix apply_standardize(const StandardizeStats& stats, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != stats.dim()) {
    throw Error(ErrorKind::shape, "standardize: input has " + std::to_string(x.cols()) +
                                      " columns, statistics have " + std::to_string(stats.dim()));
  }
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      out(i, j) = stats.degenerate[j] ? 0.0 : (x(i, j) - stats.means[j]) / stats.stds[j];
    }
  }
  return out;
}

double PcaModel::retained_fraction() const {
  if (total_variance <= 0.0) return 1.0;
  const double kept = std::accumulate(explained_variance.begin(), explained_variance.end(), 0.0);
  return kept / total_variance;
}

PcaModel pca_fit(const Matrix& xs, int k) {
  if (k < 1) throw Error(ErrorKind::parameter, "pca_fit: k must be >= 1, got " + std::to_string(k));
  if (xs.rows() < 2) {
    throw Error(ErrorKind::insufficient_data, "pca_fit needs at least 2 tokens, got " +
                                                  std::to_string(xs.rows()));
  }
  require_finite(xs, "pca_fit");
  const Eigen::Index n = xs.rows();
  const Eigen::Index d = xs.cols();
  const Eigen::Index keep = std::min<Eigen::Index>({k, n - 1, d});

  Vector center = Vector::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) center += xs.row(i).transpose();
  center /= static_cast<double>(n);
  const Matrix xc = xs.rowwise() - center.transpose();

  const Matrix cov = scatter_matrix(xc) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorKind::computation, "pca_fit: eigendecomposition did not converge");
  }
  const auto& values = eig.eigenvalues();    // ascending
  const auto& vectors = eig.eigenvectors();  // columns

  PcaModel model;
  model.center.assign(center.data(), center.data() + d);
  model.total_variance = cov.trace();
  model.components.resize(keep, d);
  model.explained_variance.resize(keep);
  for (Eigen::Index c = 0; c < keep; ++c) {
    const Eigen::Index src = d - 1 - c;
    Vector v = vectors.col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    model.components.row(c) = v.transpose();
    model.explained_variance[c] = std::max(0.0, values[src]);
  }
  // Clamping can break ordering only among values within rounding of zero.
  for (std::size_t c = 1; c < model.explained_variance.size(); ++c) {
    model.explained_variance[c] = std::min(model.explained_variance[c], model.explained_variance[c - 1]);
  }
  return model;
}

Matrix pca_transform(const PcaModel& model, const Matrix& xs) {
  if (xs.cols() != model.dim()) {
    throw Error(ErrorKind::shape, "pca_transform: input has " + std::to_string(xs.cols()) +
                                      " columns, model expects " + std::to_string(model.dim()));
  }
  const Eigen::Index n = xs.rows();
  const Eigen::Map<const Eigen::RowVectorXd> center(model.center.data(),
                                                    static_cast<Eigen::Index>(model.center.size()));
  Matrix z(n, model.k());
  const Eigen::Index blocks = (n + kRowBlock - 1) / kRowBlock;
#pragma omp parallel for schedule(static)
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const Eigen::Index r0 = b * kRowBlock;
    const Eigen::Index h = std::min(kRowBlock, n - r0);
    const Matrix centered = xs.middleRows(r0, h).rowwise() - center;
    z.middleRows(r0, h).noalias() = centered * model.components.transpose();
  }
  return z;
}

Matrix pca_inverse_transform(const PcaModel& model, const Matrix& z) {
  if (z.cols() != model.k()) throw Error(ErrorKind::shape, "pca_inverse_transform: width mismatch");
  const Eigen::Map<const Eigen::RowVectorXd> center(model.center.data(),
                                                    static_cast<Eigen::Index>(model.center.size()));
  Matrix x = z * model.components;
  x.rowwise() += center;
  return x;
}

PreprocessResult preprocess_layer(const Matrix& x, int k) {
  Standardized s = standardize(x);
  PreprocessResult out;
  out.model = pca_fit(s.values, k);
  out.reduced = pca_transform(out.model, s.values);
  out.stats = std::move(s.stats);
  return out;
}

void write_pca_sidecar(const std::filesystem::path& path, const StandardizeStats& stats,
                       const PcaModel& model) {
  const auto dim = static_cast<std::uint32_t>(model.dim());
  if (stats.dim() != dim) throw Error(ErrorKind::shape, "sidecar: statistics and model widths differ");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out.write("PCA1", 4);
  put_u32(out, dim);
  put_u32(out, static_cast<std::uint32_t>(model.k()));
  for (double v : model.center) put_f64(out, v);
  for (double v : stats.means) put_f64(out, v);
  for (double v : stats.stds) put_f64(out, v);
  for (double v : model.explained_variance) put_f64(out, v);
  for (Eigen::Index i = 0; i < model.components.size(); ++i) put_f64(out, model.components.data()[i]);
  std::vector<unsigned char> bitmap((dim + 7) / 8, 0);
  for (std::uint32_t j = 0; j < dim; ++j) {
    if (stats.degenerate[j]) bitmap[j / 8] |= static_cast<unsigned char>(1u << (j % 8));
  }
  out.write(reinterpret_cast<const char*>(bitmap.data()), static_cast<std::streamsize>(bitmap.size()));
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

PcaSidecar read_pca_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::missing_file, "missing PCA sidecar " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "PCA1", 4) != 0) {
    throw Error(ErrorKind::format, path.string() + ": bad magic, expected \"PCA1\"");
  }
  ByteReader r(std::move(bytes));
  r.skip(4);
  const std::uint32_t dim = r.u32();
  const std::uint32_t k = r.u32();
  const std::size_t expected = 8ull * (3ull * dim + k + 1ull * k * dim) + (dim + 7) / 8;
  if (r.remaining() != expected) throw Error(ErrorKind::truncation, path.string() + ": size mismatch");
  PcaSidecar s;
  auto read_vec = [&](std::vector<double>& v, std::size_t n) {
    v.resize(n);
    for (auto& x : v) x = r.f64();
  };
  read_vec(s.model.center, dim);
  read_vec(s.stats.means, dim);
  read_vec(s.stats.stds, dim);
  read_vec(s.model.explained_variance, k);
  s.model.components.resize(k, dim);
  for (Eigen::Index i = 0; i < s.model.components.size(); ++i) s.model.components.data()[i] = r.f64();
  s.stats.degenerate.assign(dim, 0);
  std::vector<std::uint8_t> bitmap((dim + 7) / 8);
  for (auto& b : bitmap) b = r.u8();
  for (std::uint32_t j = 0; j < dim; ++j) s.stats.degenerate[j] = (bitmap[j / 8] >> (j % 8)) & 1u;
  return s;
}

}  // namespace kspace
