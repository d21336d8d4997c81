#include "kspace/embed.hpp"

#include "kspace/error.hpp"
#include "kspace/rng.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

namespace kspace {
namespace {

constexpr Eigen::Index kKnnBlock = 128;
constexpr double kMinGain = 0.01;

struct Neighbors {
  std::vector<std::int64_t> index;  // n x k
  std::vector<double> dist2;        // n x k, ascending per row
  int k = 0;
};

Neighbors exact_knn(const Matrix& x, int k) {
  const Eigen::Index n = x.rows();
  Neighbors nb;
  nb.k = k;
  nb.index.resize(static_cast<std::size_t>(n * k));
  nb.dist2.resize(static_cast<std::size_t>(n * k));
  const Vector norms = x.rowwise().squaredNorm();
  const Eigen::Index blocks = (n + kKnnBlock - 1) / kKnnBlock;

#pragma omp parallel
  {
    Eigen::MatrixXd dots;
    std::vector<std::pair<double, std::int64_t>> row;
#pragma omp for schedule(dynamic)
    for (Eigen::Index b = 0; b < blocks; ++b) {
      const Eigen::Index r0 = b * kKnnBlock;
      const Eigen::Index h = std::min(kKnnBlock, n - r0);
      dots.noalias() = x.middleRows(r0, h) * x.transpose();
      for (Eigen::Index r = 0; r < h; ++r) {
        const Eigen::Index i = r0 + r;
        row.clear();
        for (Eigen::Index j = 0; j < n; ++j) {
          if (j == i) continue;
          row.emplace_back(std::max(0.0, norms[i] + norms[j] - 2.0 * dots(r, j)), j);
        }
        std::partial_sort(row.begin(), row.begin() + k, row.end());
        for (int c = 0; c < k; ++c) {
          nb.dist2[static_cast<std::size_t>(i * k + c)] = row[static_cast<std::size_t>(c)].first;
          nb.index[static_cast<std::size_t>(i * k + c)] = row[static_cast<std::size_t>(c)].second;
        }
      }
    }
  }
  return nb;
}

// Conditional p_{j|i} for one row, bandwidth chosen so the row entropy (nats)
// equals log(perplexity). Distances are shifted by their minimum, which
// cancels in the normalization and avoids underflow.
void conditional_row(const double* d2, int k, double perplexity, double* out) {
  const double target = std::log(perplexity);
  const double d_min = d2[0];
  double beta = 1.0;
  double beta_lo = -std::numeric_limits<double>::infinity();
  double beta_hi = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 200; ++step) {
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
      out[c] = std::exp(-beta * (d2[c] - d_min));
      sum += out[c];
    }
    double weighted = 0.0;
    for (int c = 0; c < k; ++c) {
      out[c] /= sum;
      weighted += (d2[c] - d_min) * out[c];
    }
    const double entropy = std::log(sum) + beta * weighted;
    const double diff = entropy - target;
    if (std::abs(diff) <= 1e-5) break;
    if (diff > 0) {
      beta_lo = beta;
      beta = std::isinf(beta_hi) ? beta * 2.0 : 0.5 * (beta + beta_hi);
    } else {
      beta_hi = beta;
      beta = std::isinf(beta_lo) ? beta * 0.5 : 0.5 * (beta + beta_lo);
    }
  }
}

double kl_divergence(const kernels::SparseAffinities& p, const Matrix& y, double z) {
  double kl = 0.0;
  for (std::int64_t i = 0; i < p.rows(); ++i) {
    for (auto e = p.row_ptr[i]; e < p.row_ptr[i + 1]; ++e) {
      const auto j = p.cols[static_cast<std::size_t>(e)];
      const double pij = p.vals[static_cast<std::size_t>(e)];
      if (pij <= 0.0) continue;
      const double d2 = (y.row(i) - y.row(j)).squaredNorm();
      const double q = std::max(1.0 / (1.0 + d2) / z, std::numeric_limits<double>::min());
      kl += pij * std::log(pij / q);
    }
  }
  return std::max(0.0, kl);
}

std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void TsneConfig::validate() const {
  if (!(perplexity > 0.0)) throw Error(ErrorKind::parameter, "perplexity must be positive");
  if (max_tokens < 1) throw Error(ErrorKind::parameter, "max_tokens must be >= 1");
  if (iterations < 1) throw Error(ErrorKind::parameter, "iterations must be >= 1");
  if (!(early_exaggeration > 0.0)) throw Error(ErrorKind::parameter, "early exaggeration must be positive");
  if (exaggeration_iterations < 0) throw Error(ErrorKind::parameter, "exaggeration iterations must be >= 0");
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::parameter, "learning rate must be positive");
  if (!(theta >= 0.0 && theta <= 1.0)) throw Error(ErrorKind::parameter, "theta must lie in [0, 1]");
}

std::vector<std::size_t> subsample_tokens(std::size_t n, std::size_t max_tokens, std::uint64_t seed) {
  if (max_tokens < 1) throw Error(ErrorKind::parameter, "max_tokens must be >= 1");
  if (n <= max_tokens) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  return sample_without_replacement(n, max_tokens, seed);
}

kernels::SparseAffinities joint_probabilities(const Matrix& x, double perplexity) {
  const Eigen::Index n = x.rows();
  const int k = static_cast<int>(std::min<double>(static_cast<double>(n - 1), std::floor(3.0 * perplexity + 1.0)));
  const Neighbors nb = exact_knn(x, k);

  std::vector<double> cond(static_cast<std::size_t>(n * k));
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    conditional_row(nb.dist2.data() + i * k, k, perplexity, cond.data() + i * k);
  }

  // P + Pᵀ, merged per row in column order, then normalized to sum 1.
  std::vector<std::tuple<std::int64_t, std::int64_t, double>> entries;
  entries.reserve(static_cast<std::size_t>(2 * n * k));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) {
      const auto idx = static_cast<std::size_t>(i * k + c);
      entries.emplace_back(i, nb.index[idx], cond[idx]);
      entries.emplace_back(nb.index[idx], i, cond[idx]);
    }
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
  });

  kernels::SparseAffinities p;
  p.row_ptr.assign(static_cast<std::size_t>(n + 1), 0);
  double total = 0.0;
  for (std::size_t e = 0; e < entries.size();) {
    const auto [i, j, v0] = entries[e];
    double v = v0;
    std::size_t f = e + 1;
    for (; f < entries.size() && std::get<0>(entries[f]) == i && std::get<1>(entries[f]) == j; ++f) {
      v += std::get<2>(entries[f]);
    }
    p.cols.push_back(j);
    p.vals.push_back(v);
    ++p.row_ptr[static_cast<std::size_t>(i + 1)];
    total += v;
    e = f;
  }
  for (std::size_t r = 1; r < p.row_ptr.size(); ++r) p.row_ptr[r] += p.row_ptr[r - 1];
  for (auto& v : p.vals) v /= total;
  return p;
}

EmbeddingResult tsne_embed(const Matrix& points, std::span<const std::uint8_t> labels,
                           const TsneConfig& config, std::span<const std::size_t> source_indices) {
  config.validate();
  const Eigen::Index n = points.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw Error(ErrorKind::shape, "tsne_embed: label count differs from point count");
  }
  if (!source_indices.empty() && static_cast<Eigen::Index>(source_indices.size()) != n) {
    throw Error(ErrorKind::shape, "tsne_embed: source index count differs from point count");
  }
  if (!(3.0 * config.perplexity + 1.0 < static_cast<double>(n))) {
    throw Error(ErrorKind::parameter, "perplexity " + format_g9(config.perplexity) + " too large for " +
                                          std::to_string(n) + " points (need n >= 3*perplexity + 2)");
  }
  if (!points.allFinite()) throw Error(ErrorKind::validation, "tsne_embed: non-finite input");

  const kernels::SparseAffinities p = joint_probabilities(points, config.perplexity);

  Rng rng(config.seed);
  Matrix y(n, 2);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = 1e-4 * rng.normal();

  Matrix update = Matrix::Zero(n, 2);
  Matrix gains = Matrix::Ones(n, 2);
  Matrix attract, repulse;
  std::vector<double> z_parts;
  EmbeddingResult result;

  auto record_kl = [&](int iteration) {
    const kernels::QuadTree tree(y);
    Matrix scratch;
    std::vector<double> parts;
    kernels::repulsive_forces(tree, y, config.theta, scratch, parts);
    const double z = kernels::sum_in_order(parts);
    result.kl_history.push_back({iteration, kl_divergence(p, y, z)});
  };

  for (int it = 0; it < config.iterations; ++it) {
    const bool exaggerating = it < config.exaggeration_iterations;
    if (it == config.exaggeration_iterations && it > 0) {
      // New optimization stage: fresh momentum state.
      update.setZero();
      gains.setOnes();
    }
    const double momentum = exaggerating ? 0.5 : 0.8;
    const double exaggeration = exaggerating ? config.early_exaggeration : 1.0;

    const kernels::QuadTree tree(y);
    kernels::repulsive_forces(tree, y, config.theta, repulse, z_parts);
    const double z = kernels::sum_in_order(z_parts);
    kernels::attractive_forces(p, y, exaggeration, attract);

    for (Eigen::Index i = 0; i < n; ++i) {
      for (int d = 0; d < 2; ++d) {
        const double g = 4.0 * (attract(i, d) - repulse(i, d) / z);
        double& gain = gains(i, d);
        gain = (update(i, d) * g < 0.0) ? gain + 0.2 : gain * 0.8;
        gain = std::max(gain, kMinGain);
        update(i, d) = momentum * update(i, d) - config.learning_rate * gain * g;
        y(i, d) += update(i, d);
      }
    }
    const Eigen::RowVector2d mean = y.colwise().mean();
    y.rowwise() -= mean;

    const int done = it + 1;
    const bool checkpoint = (config.checkpoint_every > 0 && done % config.checkpoint_every == 0) ||
                            done == config.exaggeration_iterations + 1 || done == config.iterations;
    if (checkpoint) record_kl(done);
  }

  if (!y.allFinite()) throw Error(ErrorKind::computation, "t-SNE diverged to non-finite coordinates");
  result.coords = std::move(y);
  result.labels.assign(labels.begin(), labels.end());
  if (source_indices.empty()) {
    result.source_indices.resize(static_cast<std::size_t>(n));
    std::iota(result.source_indices.begin(), result.source_indices.end(), std::size_t{0});
  } else {
    result.source_indices.assign(source_indices.begin(), source_indices.end());
  }
  result.final_kl = result.kl_history.back().kl;
  return result;
}

EmbeddingResult tsne_embed_capped(const Matrix& points, std::span<const std::uint8_t> labels,
                                  const TsneConfig& config) {
  const auto keep = subsample_tokens(static_cast<std::size_t>(points.rows()), config.max_tokens, config.seed);
  Matrix sub(static_cast<Eigen::Index>(keep.size()), points.cols());
  std::vector<std::uint8_t> sub_labels(keep.size());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    sub.row(static_cast<Eigen::Index>(r)) = points.row(static_cast<Eigen::Index>(keep[r]));
    sub_labels[r] = labels[keep[r]];
  }
  return tsne_embed(sub, sub_labels, config, keep);
}

void export_embedding(const EmbeddingResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out << "x,y,label,source_index\n";
  for (Eigen::Index i = 0; i < result.coords.rows(); ++i) {
    out << format_g9(result.coords(i, 0)) << ',' << format_g9(result.coords(i, 1)) << ','
        << static_cast<int>(result.labels[static_cast<std::size_t>(i)]) << ','
        << result.source_indices[static_cast<std::size_t>(i)] << '\n';
  }
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

EmbeddingResult read_embedding_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::missing_file, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "x,y,label,source_index") {
    throw Error(ErrorKind::format, path.string() + ": expected header x,y,label,source_index");
  }
  std::vector<double> xs, ys;
  EmbeddingResult r;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string x, y, label, source;
    if (!std::getline(row, x, ',') || !std::getline(row, y, ',') || !std::getline(row, label, ',') ||
        !std::getline(row, source)) {
      throw Error(ErrorKind::format, path.string() + ": malformed row: " + line);
    }
    xs.push_back(std::stod(x));
    ys.push_back(std::stod(y));
    r.labels.push_back(static_cast<std::uint8_t>(std::stoi(label)));
    r.source_indices.push_back(static_cast<std::size_t>(std::stoull(source)));
  }
  r.coords.resize(static_cast<Eigen::Index>(xs.size()), 2);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    r.coords(static_cast<Eigen::Index>(i), 0) = xs[i];
    r.coords(static_cast<Eigen::Index>(i), 1) = ys[i];
  }
  return r;
}

}  // namespace kspace
