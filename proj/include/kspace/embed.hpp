#pragma once

// Token subsampling and 2-D Barnes-Hut t-SNE for visualization exports.

#include "kspace/kernels/tsne_forces.hpp"
#include "kspace/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace kspace {

struct TsneConfig {
  double perplexity = 30.0;
  std::uint64_t seed = 42;
  std::size_t max_tokens = 50'000;
  int iterations = 1000;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  double learning_rate = 200.0;
  double theta = 0.5;
  int checkpoint_every = 50;

  void validate() const;
};

struct KlCheckpoint {
  int iteration = 0;  // number of completed updates
  double kl = 0.0;
};

struct EmbeddingResult {
  Matrix coords;  // n x 2
  std::vector<std::uint8_t> labels;
  std::vector<std::size_t> source_indices;
  double final_kl = 0.0;
  std::vector<KlCheckpoint> kl_history;
};

/// All of 0..n-1 when n <= max_tokens, otherwise max_tokens distinct indices
/// drawn uniformly without replacement, sorted ascending.
std::vector<std::size_t> subsample_tokens(std::size_t n, std::size_t max_tokens, std::uint64_t seed);

/// Symmetrized joint probabilities from exact k-nearest neighbours
/// (k = min(n-1, floor(3*perplexity + 1))) with per-point bandwidths matched
/// to the perplexity by bisection.
kernels::SparseAffinities joint_probabilities(const Matrix& x, double perplexity);

/// Embeds every row of `points`. `source_indices` defaults to 0..n-1.
EmbeddingResult tsne_embed(const Matrix& points, std::span<const std::uint8_t> labels,
                           const TsneConfig& config,
                           std::span<const std::size_t> source_indices = {});

/// Subsamples to config.max_tokens, then embeds.
EmbeddingResult tsne_embed_capped(const Matrix& points, std::span<const std::uint8_t> labels,
                                  const TsneConfig& config);

/// CSV with header `x,y,label,source_index`, coordinates at 9 significant digits.
void export_embedding(const EmbeddingResult& result, const std::filesystem::path& path);
EmbeddingResult read_embedding_csv(const std::filesystem::path& path);

}  // namespace kspace
