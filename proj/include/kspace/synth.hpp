#pragma once

// Seeded synthetic dumps with closed-form and quadrature oracles.

#include "kspace/dumpstore.hpp"
#include "kspace/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace kspace {

enum class SynthPreset { identical, overlapping, separated, clustered };
std::string to_string(SynthPreset p);
SynthPreset preset_from_string(const std::string& s);

struct SynthSpec {
  SynthPreset preset = SynthPreset::separated;
  std::size_t n_img = 1000;
  std::size_t n_txt = 1000;
  std::uint32_t dim = 4;
  double mean_shift = 10.0;
  double cov_scale_img = 1.0;
  double cov_scale_txt = 1.0;
  int n_clusters_img = 3;
  double cluster_separation = 20.0;
  std::uint64_t seed = 42;
  std::vector<std::uint32_t> layers = {0};
  std::size_t tokens_per_sample = 100;

  void validate() const;
};

/// Preset defaults:
///   identical    dim 50, shift 0
///   overlapping  dim 50, shift 1
///   separated    dim 4,  shift 10
///   clustered    dim 50, shift 10, 3 image clusters 20 apart
SynthSpec preset_spec(SynthPreset preset);

/// One layer's tokens: image rows (label 1) first, then text rows (label 0).
/// Image rows ~ N(shift * e1, cov_scale_img * I); text rows ~ N(0, cov_scale_txt * I).
/// The clustered preset places image cluster c at shift*e1 + (separation/√2)*e_{c+1}
/// and assigns image rows to clusters in contiguous, nearly equal blocks.
/// Rows are drawn with seed + layer_index. sample_ids are row / tokens_per_sample.
LayerDump generate_layer(const SynthSpec& spec, std::uint32_t layer_index);

/// Writes layer<idx>.kvd files and manifest.json into out_dir.
Manifest generate_dump(const SynthSpec& spec, const std::filesystem::path& out_dir);

/// Population MMD under k(x,y) = exp(-gamma ||x-y||²) between the two
/// isotropic Gaussian modalities, from
///   E k = (1 + 2γ(σa² + σb²))^(-d/2) exp(-γ ||μa-μb||² / (1 + 2γ(σa² + σb²))).
double population_mmd_oracle(const SynthSpec& spec, double gamma);

/// Base-2 JS divergence of two 1-D Gaussians by adaptive Simpson quadrature.
double js_quadrature_oracle_1d(double mu_a, double sigma_a, double mu_b, double sigma_b);

}  // namespace kspace
