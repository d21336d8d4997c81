#pragma once

// Two-sample divergences between image-token and text-token distributions in
// PCA space: Gaussian-kernel MMD, Jensen-Shannon divergence (random
// projections + histograms, or KDE for <= 2-D data), half-split
// intra-modality controls, and permutation p-values.

#include "kspace/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace kspace {

inline constexpr std::size_t kDefaultModalityCap = 25'000;
inline constexpr int kDefaultPermutations = 999;

enum class Comparison { image_vs_text, image_vs_image, text_vs_text };
std::string to_string(Comparison c);
Comparison comparison_from_string(const std::string& s);

enum class Metric { mmd, js };
enum class MetricSelection { mmd, js, both };

/// biased_sqrt: sqrt(max(0, V-statistic MMD²)), diagonal terms included.
/// unbiased_squared: U-statistic MMD² (may be slightly negative).
enum class MmdEstimator { biased_sqrt, unbiased_squared };

/// auto: gamma = 1 / number of features. median: gamma = 1 / median squared
/// pairwise distance over at most 1000 pooled rows chosen by a seeded shuffle.
enum class GammaMode { fixed, auto_features, median };

struct DivergenceConfig {
  GammaMode gamma_mode = GammaMode::auto_features;
  double gamma = 0.0;  // used when gamma_mode == fixed
  int n_projections = 10;
  int histogram_bins = 50;
  int kde_grid_points = 256;
  double epsilon = 1e-10;
  std::uint64_t seed = 42;  // projection directions and median-heuristic subsample
  MmdEstimator estimator = MmdEstimator::biased_sqrt;

  void validate() const;
  double resolve_gamma(const Matrix& a, const Matrix& b) const;
};

struct ModalitySplit {
  Matrix z_img;
  Matrix z_txt;
  std::vector<std::size_t> img_rows;  // source rows, ascending
  std::vector<std::size_t> txt_rows;
  std::uint32_t layer_index = 0;
  std::size_t cap = kDefaultModalityCap;
  std::uint64_t seed = 0;
};

/// Label-2 rows are dropped. Each modality over `cap` is sampled uniformly
/// without replacement (image rows with `seed`, text rows with `seed + 1`);
/// retained rows keep their input order.
ModalitySplit build_split(const Matrix& z, std::span<const std::uint8_t> labels, std::size_t cap,
                          std::uint64_t seed, std::uint32_t layer_index = 0);

double mmd_rbf(const Matrix& a, const Matrix& b, double gamma,
               MmdEstimator estimator = MmdEstimator::biased_sqrt);

double js_random_projection(const Matrix& a, const Matrix& b, const DivergenceConfig& config);
double js_kde_lowdim(const Matrix& a, const Matrix& b, const DivergenceConfig& config);

/// KDE path for <= 2 features, random projections otherwise.
double js_divergence(const Matrix& a, const Matrix& b, const DivergenceConfig& config);

/// Base-2 Jensen-Shannon divergence of two non-negative weight vectors after
/// adding `epsilon` to every entry and normalizing each to sum 1.
double js_from_weights(std::span<const double> p, std::span<const double> q, double epsilon);

struct HalfSplit {
  std::vector<std::size_t> first;   // floor(n/2) rows
  std::vector<std::size_t> second;  // ceil(n/2) rows
};
HalfSplit half_split(std::size_t n, std::uint64_t seed);

double intra_modality_baseline(const Matrix& x, const DivergenceConfig& config, Metric metric,
                               std::uint64_t split_seed);

struct PermutationResult {
  double observed = 0.0;  // statistic on the original grouping (MMD² for mmd)
  double p_value = 1.0;
  int n_perm = 0;
  int exceed = 0;  // permuted statistics >= observed
};

/// p = (1 + #{permuted >= observed}) / (n_perm + 1), group sizes preserved.
PermutationResult permutation_test(const Matrix& a, const Matrix& b, Metric metric, int n_perm,
                                   const DivergenceConfig& config, std::uint64_t perm_seed);

struct DivergenceResult {
  Comparison comparison = Comparison::image_vs_text;
  std::uint32_t layer_index = 0;
  std::optional<double> mmd;
  std::optional<double> js;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  std::optional<double> p_value;
  std::uint64_t seed = 0;
  double gamma_resolved = 0.0;
};

struct LayerDivergenceOptions {
  MetricSelection metrics = MetricSelection::both;
  int permutations = 0;  // 0 disables the permutation test
  std::uint64_t intra_seed = 45;
  std::uint64_t perm_seed = 46;
};

/// Cross comparison followed by the image and text half-split controls.
std::array<DivergenceResult, 3> layer_divergence(const ModalitySplit& split, const DivergenceConfig& config,
                                                 const LayerDivergenceOptions& options);

nlohmann::ordered_json config_to_json(const DivergenceConfig& config);
DivergenceConfig config_from_json(const nlohmann::json& j);

struct ResultContext {
  std::string model;
  std::string benchmark;
};

/// Array of result objects (comparison, layer, mmd, js, n_a, n_b, p_value,
/// seed, gamma_resolved, model, benchmark, config).
nlohmann::ordered_json results_to_json(std::span<const DivergenceResult> results,
                                       const DivergenceConfig& config, const ResultContext& context,
                                       const LayerDivergenceOptions& options);

}  // namespace kspace
