#pragma once

// Binary interchange format for token-labeled key-vector dumps.
//
// Layer file, all fields little-endian:
//   magic        4 bytes  "KVD1"
//   layer_index  u32
//   dim          u32
//   count        u64
//   sample_ids   count x u32
//   labels       count x u8   (0 text, 1 image, 2 other)
//   data         count x dim x f32, row-major
// Total size is exactly 20 + 5*count + 4*count*dim bytes.
//
// A dump directory holds one file per layer plus `manifest.json`.

#include "kspace/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kspace {

inline constexpr char kDumpMagic[4] = {'K', 'V', 'D', '1'};
inline constexpr std::uint64_t kDumpHeaderBytes = 20;
inline constexpr int kManifestFormatVersion = 1;

struct LayerDump {
  std::uint32_t layer_index = 0;
  std::uint32_t dim = 0;
  std::vector<std::uint32_t> sample_ids;
  std::vector<std::uint8_t> labels;
  std::vector<float> data;  // count x dim, row-major

  std::uint64_t count() const { return labels.size(); }
  const float* row(std::uint64_t i) const { return data.data() + i * dim; }

  bool operator==(const LayerDump&) const = default;
};

/// Serialized size implied by the byte layout.
std::uint64_t dump_file_size(std::uint64_t count, std::uint64_t dim);

/// Throws a validation error if any LayerDump invariant fails.
void validate_layer_dump(const LayerDump& dump);

/// Validates first; on failure nothing is written. Writes via a sibling
/// temporary file renamed into place.
void write_layer_dump(const LayerDump& dump, const std::filesystem::path& path);
LayerDump read_layer_dump(const std::filesystem::path& path);

/// Header fields only; still checks magic and the size law.
struct DumpHeader {
  std::uint32_t layer_index = 0;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
};
DumpHeader read_dump_header(const std::filesystem::path& path);

/// Data matrix widened to double.
Matrix dump_matrix(const LayerDump& dump);

struct Manifest {
  int format_version = kManifestFormatVersion;
  std::string model_name;
  std::string benchmark_name;
  std::uint32_t hidden_dim = 0;
  std::map<std::uint32_t, std::string> layer_files;  // layer -> relative path

  bool operator==(const Manifest&) const = default;
};

inline constexpr const char* kManifestFileName = "manifest.json";

Manifest read_manifest(const std::filesystem::path& dir);
void write_manifest(const Manifest& manifest, const std::filesystem::path& dir);

struct LayerSummary {
  std::uint32_t layer_index = 0;
  std::uint32_t dim = 0;
  std::uint64_t n_text = 0;
  std::uint64_t n_image = 0;
  std::uint64_t n_other = 0;
  std::string path;
};

struct ValidationSummary {
  Manifest manifest;
  std::vector<LayerSummary> layers;
};

/// Loads every layer referenced by the manifest and checks all manifest and
/// layer invariants. Throws on the first broken invariant.
ValidationSummary validate_dump_dir(const std::filesystem::path& dir);
/// Same checks restricted to the listed layers; other layer files are not opened.
ValidationSummary validate_dump_dir(const std::filesystem::path& dir,
                                    const std::optional<std::vector<std::uint32_t>>& only);

}  // namespace kspace
