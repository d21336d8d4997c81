#pragma once

// End-to-end orchestration: validate -> preprocess -> t-SNE / divergence -> report.

#include "kspace/divergence.hpp"
#include "kspace/dumpstore.hpp"
#include "kspace/embed.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace kspace {

/// Per-stage seed offsets from the global seed.
inline constexpr std::uint64_t kTsneSeedOffset = 0;
inline constexpr std::uint64_t kSplitSeedOffset = 1;
inline constexpr std::uint64_t kProjectionSeedOffset = 2;
inline constexpr std::uint64_t kIntraSeedOffset = 3;
inline constexpr std::uint64_t kPermutationSeedOffset = 4;

struct SeedOverrides {
  std::optional<std::uint64_t> tsne;
  std::optional<std::uint64_t> split;
  std::optional<std::uint64_t> projection;
  std::optional<std::uint64_t> intra;
  std::optional<std::uint64_t> permutation;
};

struct StageSeeds {
  std::uint64_t tsne = 0;
  std::uint64_t split = 0;
  std::uint64_t projection = 0;
  std::uint64_t intra = 0;
  std::uint64_t permutation = 0;
};

struct Stages {
  bool pca_sidecar = true;
  bool tsne = true;
  bool divergence = true;
  bool report = true;
};

struct RunConfig {
  std::filesystem::path input_dir;
  std::filesystem::path output_dir;
  std::optional<std::vector<std::uint32_t>> layers;  // nullopt selects every manifest layer
  int pca_components = 50;
  TsneConfig tsne;              // seed is replaced by the derived stage seed
  DivergenceConfig divergence;  // seed is replaced by the derived projection seed
  int permutations = 999;
  std::uint64_t global_seed = 42;
  SeedOverrides seed_overrides;
  std::size_t max_per_modality = kDefaultModalityCap;
  MetricSelection metrics = MetricSelection::both;
  int threads = 0;  // 0 keeps the OpenMP default
  Stages stages;

  void validate() const;
  StageSeeds seeds() const;
};

nlohmann::ordered_json tsne_config_to_json(const TsneConfig& config);
/// Keys absent from `j` keep the values already in `config`.
void tsne_config_update(TsneConfig& config, const nlohmann::json& j);

nlohmann::ordered_json run_config_to_json(const RunConfig& config);
/// Accepts a bare config object or a run-manifest (its "config" member).
/// Keys absent from the JSON keep the values already in `config`.
void run_config_update(RunConfig& config, const nlohmann::json& j);
RunConfig run_config_from_file(const std::filesystem::path& path);

/// Resolves the requested layers against the manifest. Unknown layers raise a
/// usage error naming them and listing the valid set.
std::vector<std::uint32_t> select_layers(const Manifest& manifest,
                                         const std::optional<std::vector<std::uint32_t>>& requested);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

struct RunOutcome {
  int exit_code = 0;
  std::string message;            // stage-tagged on failure
  nlohmann::ordered_json manifest;  // run-manifest contents; null when nothing was written
};

/// Never throws for stage failures; they are reported through the outcome and
/// the run-manifest. Artifacts: layer<idx>.pca, layer<idx>.tsne.csv,
/// divergence.json, report.json, run-manifest.json.
RunOutcome run_pipeline(const RunConfig& config, std::ostream& log);

}  // namespace kspace
