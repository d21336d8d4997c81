#include "kspace/dumpstore.hpp"

#include "kspace/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace kspace {
namespace fs = std::filesystem;

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::vector<unsigned char> read_bytes(const fs::path& path, std::uint64_t limit) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::vector<unsigned char> bytes(limit);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(limit));
  bytes.resize(static_cast<std::size_t>(in.gcount()));
  return bytes;
}

DumpHeader decode_header(const fs::path& path, const std::vector<unsigned char>& bytes,
                         std::uint64_t file_size) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kDumpMagic, 4) != 0) {
    throw Error(ErrorKind::format,
                path.string() + ": bad magic, expected \"KVD1\"");
  }
  if (file_size < kDumpHeaderBytes) {
    throw Error(ErrorKind::truncation, path.string() + ": file shorter than the 20-byte header");
  }
  DumpHeader h;
  h.layer_index = get_u32(bytes.data() + 4);
  h.dim = get_u32(bytes.data() + 8);
  h.count = get_u64(bytes.data() + 12);
  if (h.dim == 0) throw Error(ErrorKind::validation, path.string() + ": dim must be positive");
  // Guard the size formula against overflow before comparing.
  const std::uint64_t max_count = (UINT64_MAX - kDumpHeaderBytes) / (5 + 4ull * h.dim);
  if (h.count > max_count) {
    throw Error(ErrorKind::truncation, path.string() + ": header count " +
                                           std::to_string(h.count) + " exceeds any file size");
  }
  const std::uint64_t expected = dump_file_size(h.count, h.dim);
  if (expected != file_size) {
    std::ostringstream msg;
    msg << path.string() << ": header implies " << expected << " bytes (count=" << h.count
        << ", dim=" << h.dim << ") but file has " << file_size;
    throw Error(ErrorKind::truncation, msg.str());
  }
  return h;
}

}  // namespace

std::uint64_t dump_file_size(std::uint64_t count, std::uint64_t dim) {
  return kDumpHeaderBytes + 5 * count + 4 * count * dim;
}

void validate_layer_dump(const LayerDump& dump) {
  if (dump.dim == 0) throw Error(ErrorKind::validation, "dump dim must be positive");
  const auto n = dump.labels.size();
  if (dump.sample_ids.size() != n) {
    throw Error(ErrorKind::validation, "sample_ids length " + std::to_string(dump.sample_ids.size()) +
                                           " != label count " + std::to_string(n));
  }
  if (dump.data.size() != n * dump.dim) {
    throw Error(ErrorKind::validation, "data holds " + std::to_string(dump.data.size()) +
                                           " values, expected count*dim = " +
                                           std::to_string(n * dump.dim));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_valid_modality(dump.labels[i])) {
      throw Error(ErrorKind::validation, "unknown label code " + std::to_string(dump.labels[i]) +
                                             " at token " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < dump.data.size(); ++i) {
    if (!std::isfinite(dump.data[i])) {
      throw Error(ErrorKind::validation, "non-finite value at token " +
                                             std::to_string(i / dump.dim) + ", feature " +
                                             std::to_string(i % dump.dim));
    }
  }
}

void write_layer_dump(const LayerDump& dump, const fs::path& path) {
  validate_layer_dump(dump);
  const std::uint64_t n = dump.count();
  std::vector<unsigned char> bytes;
  bytes.reserve(dump_file_size(n, dump.dim));
  bytes.insert(bytes.end(), kDumpMagic, kDumpMagic + 4);
  put_u32(bytes, dump.layer_index);
  put_u32(bytes, dump.dim);
  put_u64(bytes, n);
  for (auto id : dump.sample_ids) put_u32(bytes, id);
  bytes.insert(bytes.end(), dump.labels.begin(), dump.labels.end());
  for (float v : dump.data) put_u32(bytes, std::bit_cast<std::uint32_t>(v));

  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorKind::io, "cannot move dump into place at " + path.string());
  }
}

DumpHeader read_dump_header(const fs::path& path) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw Error(ErrorKind::missing_file, "missing layer file " + path.string());
  return decode_header(path, read_bytes(path, kDumpHeaderBytes), size);
}

LayerDump read_layer_dump(const fs::path& path) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw Error(ErrorKind::missing_file, "missing layer file " + path.string());
  const auto bytes = read_bytes(path, size);
  const DumpHeader h = decode_header(path, bytes, bytes.size());

  LayerDump dump;
  dump.layer_index = h.layer_index;
  dump.dim = h.dim;
  const std::size_t n = h.count;
  const unsigned char* p = bytes.data() + kDumpHeaderBytes;
  dump.sample_ids.resize(n);
  for (std::size_t i = 0; i < n; ++i, p += 4) dump.sample_ids[i] = get_u32(p);
  dump.labels.assign(p, p + n);
  p += n;
  dump.data.resize(n * h.dim);
  for (auto& v : dump.data) {
    v = std::bit_cast<float>(get_u32(p));
    p += 4;
  }
  try {
    validate_layer_dump(dump);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
  return dump;
}

Matrix dump_matrix(const LayerDump& dump) {
  Matrix m(static_cast<Eigen::Index>(dump.count()), static_cast<Eigen::Index>(dump.dim));
  for (std::size_t i = 0; i < dump.data.size(); ++i) m.data()[i] = dump.data[i];
  return m;
}

Manifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / kManifestFileName;
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::validation, "no manifest.json in " + dir.string());
  Manifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.format_version = j.at("format_version").get<int>();
    m.model_name = j.at("model_name").get<std::string>();
    m.benchmark_name = j.at("benchmark_name").get<std::string>();
    m.hidden_dim = j.at("hidden_dim").get<std::uint32_t>();
    for (const auto& [key, value] : j.at("layer_files").items()) {
      std::size_t used = 0;
      const unsigned long layer = std::stoul(key, &used);
      if (used != key.size()) throw std::invalid_argument("layer key");
      m.layer_files[static_cast<std::uint32_t>(layer)] = value.get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::validation, path.string() + ": malformed manifest: " + e.what());
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::validation, path.string() + ": layer_files keys must be decimal layer indices");
  }
  if (m.format_version != kManifestFormatVersion) {
    throw Error(ErrorKind::validation, path.string() + ": unsupported format_version " +
                                           std::to_string(m.format_version));
  }
  if (m.hidden_dim == 0) throw Error(ErrorKind::validation, path.string() + ": hidden_dim must be positive");
  return m;
}

void write_manifest(const Manifest& manifest, const fs::path& dir) {
  nlohmann::ordered_json j;
  j["format_version"] = manifest.format_version;
  j["model_name"] = manifest.model_name;
  j["benchmark_name"] = manifest.benchmark_name;
  j["hidden_dim"] = manifest.hidden_dim;
  j["layer_files"] = nlohmann::ordered_json::object();
  for (const auto& [layer, file] : manifest.layer_files) j["layer_files"][std::to_string(layer)] = file;
  std::ofstream out(dir / kManifestFileName, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write manifest in " + dir.string());
  out << j.dump(2) << '\n';
}

ValidationSummary validate_dump_dir(const fs::path& dir) { return validate_dump_dir(dir, std::nullopt); }

ValidationSummary validate_dump_dir(const fs::path& dir, const std::optional<std::vector<std::uint32_t>>& only) {
  ValidationSummary summary;
  summary.manifest = read_manifest(dir);
  for (const auto& [layer, file] : summary.manifest.layer_files) {
    if (only && std::find(only->begin(), only->end(), layer) == only->end()) continue;
    const fs::path path = dir / file;
    if (!fs::exists(path)) {
      throw Error(ErrorKind::missing_file, "manifest layer " + std::to_string(layer) +
                                               " references missing file " + path.string());
    }
    const LayerDump dump = read_layer_dump(path);
    if (dump.layer_index != layer) {
      throw Error(ErrorKind::validation, path.string() + ": embedded layer_index " +
                                             std::to_string(dump.layer_index) +
                                             " but manifest lists layer " + std::to_string(layer));
    }
    if (dump.dim != summary.manifest.hidden_dim) {
      throw Error(ErrorKind::dim_mismatch, path.string() + ": dim " + std::to_string(dump.dim) +
                                               " != manifest hidden_dim " +
                                               std::to_string(summary.manifest.hidden_dim));
    }
    LayerSummary s;
    s.layer_index = layer;
    s.dim = dump.dim;
    s.path = file;
    for (auto code : dump.labels) {
      switch (static_cast<Modality>(code)) {
        case Modality::text: ++s.n_text; break;
        case Modality::image: ++s.n_image; break;
        case Modality::other: ++s.n_other; break;
      }
    }
    summary.layers.push_back(std::move(s));
  }
  return summary;
}

}  // namespace kspace
