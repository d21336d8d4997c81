#include "kspace/dumpstore.hpp"
#include "kspace/error.hpp"
#include "kspace/rng.hpp"
#include "kspace/synth.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

using namespace kspace;
using kspace::testing::TempDir;
namespace fs = std::filesystem;

namespace {

LayerDump random_dump(std::uint64_t seed, std::size_t count, std::uint32_t dim, std::uint32_t layer = 0) {
  Rng r(seed);
  LayerDump d;
  d.layer_index = layer;
  d.dim = dim;
  for (std::size_t i = 0; i < count; ++i) {
    d.sample_ids.push_back(static_cast<std::uint32_t>(i / 7));
    d.labels.push_back(static_cast<std::uint8_t>(r.uniform_index(3)));
  }
  d.data.resize(count * dim);
  for (auto& x : d.data) x = static_cast<float>(r.normal());
  return d;
}

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::usage;
}

std::string error_text(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream o(p, std::ios::binary);
  o << bytes;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("count=2, dim=3 serializes to 54 bytes") {
  TempDir tmp("kvd");
  LayerDump d;
  d.dim = 3;
  d.sample_ids = {0, 1};
  d.labels = {0, 1};
  d.data = {1, 2, 3, 4, 5, 6};
  write_layer_dump(d, tmp / "a.kvd");
  CHECK(fs::file_size(tmp / "a.kvd") == 54);
  CHECK(dump_file_size(2, 3) == 54);
  const std::string bytes = read_bytes(tmp / "a.kvd");
  CHECK(bytes.substr(0, 4) == "KVD1");
}

TEST_CASE("seeded 1000x64 dump round-trips bit-identically") {
  TempDir tmp("kvd");
  const LayerDump d = random_dump(1, 1000, 64, 7);
  write_layer_dump(d, tmp / "r.kvd");
  const LayerDump back = read_layer_dump(tmp / "r.kvd");
  CHECK(back == d);
  CHECK(std::memcmp(back.data.data(), d.data.data(), d.data.size() * sizeof(float)) == 0);
  const DumpHeader h = read_dump_header(tmp / "r.kvd");
  CHECK(h.layer_index == 7);
  CHECK(h.dim == 64);
  CHECK(h.count == 1000);
}

TEST_CASE("file size law over randomized shapes") {
  TempDir tmp("kvd");
  Rng r(99);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t t = r.uniform_index(trial < 3 ? 3 : 10001);
    const auto dim = static_cast<std::uint32_t>(1 + r.uniform_index(256));
    const LayerDump d = random_dump(trial, t, dim);
    write_layer_dump(d, tmp / "s.kvd");
    CHECK(fs::file_size(tmp / "s.kvd") == 20 + 5 * t + 4 * t * dim);
    CHECK(read_layer_dump(tmp / "s.kvd") == d);
  }
}

TEST_CASE("non-finite data is rejected and nothing is written") {
  TempDir tmp("kvd");
  LayerDump d = random_dump(2, 10, 4);
  d.data[5] = std::numeric_limits<float>::quiet_NaN();
  CHECK(kind_of([&] { write_layer_dump(d, tmp / "n.kvd"); }) == ErrorKind::validation);
  CHECK_FALSE(fs::exists(tmp / "n.kvd"));
  CHECK_FALSE(fs::exists(tmp / "n.kvd.tmp"));
  d.data[5] = std::numeric_limits<float>::infinity();
  CHECK(kind_of([&] { write_layer_dump(d, tmp / "n.kvd"); }) == ErrorKind::validation);
}

TEST_CASE("invalid in-memory dumps are rejected") {
  LayerDump d = random_dump(3, 10, 4);
  d.labels[0] = 3;
  CHECK(kind_of([&] { validate_layer_dump(d); }) == ErrorKind::validation);
  d = random_dump(3, 10, 4);
  d.data.pop_back();
  CHECK(kind_of([&] { validate_layer_dump(d); }) == ErrorKind::validation);
  d = random_dump(3, 10, 4);
  d.sample_ids.pop_back();
  CHECK(kind_of([&] { validate_layer_dump(d); }) == ErrorKind::validation);
  d = random_dump(3, 10, 4);
  d.dim = 0;
  d.data.clear();
  CHECK(kind_of([&] { validate_layer_dump(d); }) == ErrorKind::validation);
}

TEST_CASE("wrong magic is a format error naming the expected magic") {
  TempDir tmp("kvd");
  write_layer_dump(random_dump(4, 5, 2), tmp / "m.kvd");
  std::string bytes = read_bytes(tmp / "m.kvd");
  bytes.replace(0, 4, "XXXX");
  write_bytes(tmp / "m.kvd", bytes);
  CHECK(kind_of([&] { read_layer_dump(tmp / "m.kvd"); }) == ErrorKind::format);
  CHECK(error_text([&] { read_layer_dump(tmp / "m.kvd"); }).find("KVD1") != std::string::npos);
}

TEST_CASE("header claiming 10 rows with 5 present is a truncation error") {
  TempDir tmp("kvd");
  write_layer_dump(random_dump(5, 10, 3), tmp / "t.kvd");
  std::string bytes = read_bytes(tmp / "t.kvd");
  bytes.resize(20 + 5 * 10 + 4 * 5 * 3);
  write_bytes(tmp / "t.kvd", bytes);
  CHECK(kind_of([&] { read_layer_dump(tmp / "t.kvd"); }) == ErrorKind::truncation);
  write_bytes(tmp / "t.kvd", "KVD1\x01");
  CHECK(kind_of([&] { read_layer_dump(tmp / "t.kvd"); }) == ErrorKind::truncation);
  write_bytes(tmp / "t.kvd", bytes + "extra");
  CHECK(kind_of([&] { read_layer_dump(tmp / "t.kvd"); }) == ErrorKind::truncation);
}

TEST_CASE("unknown label code on disk is a validation error") {
  TempDir tmp("kvd");
  write_layer_dump(random_dump(6, 4, 2), tmp / "l.kvd");
  std::string bytes = read_bytes(tmp / "l.kvd");
  bytes[20 + 4 * 4 + 1] = 9;
  write_bytes(tmp / "l.kvd", bytes);
  CHECK(kind_of([&] { read_layer_dump(tmp / "l.kvd"); }) == ErrorKind::validation);
}

TEST_CASE("arbitrary byte strings decode fully or fail with a category") {
  TempDir tmp("kvd");
  const LayerDump good = random_dump(8, 6, 3);
  write_layer_dump(good, tmp / "g.kvd");
  const std::string base = read_bytes(tmp / "g.kvd");
  Rng r(1234);
  int decoded = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::string bytes = base;
    const int edits = 1 + static_cast<int>(r.uniform_index(3));
    for (int e = 0; e < edits; ++e) {
      bytes[r.uniform_index(bytes.size())] = static_cast<char>(r.uniform_index(256));
    }
    if (r.uniform_index(4) == 0) bytes.resize(r.uniform_index(bytes.size() + 1));
    write_bytes(tmp / "f.kvd", bytes);
    try {
      const LayerDump d = read_layer_dump(tmp / "f.kvd");
      validate_layer_dump(d);
      CHECK(fs::file_size(tmp / "f.kvd") == dump_file_size(d.count(), d.dim));
      ++decoded;
    } catch (const Error& e) {
      const auto k = e.kind();
      CHECK((k == ErrorKind::format || k == ErrorKind::truncation || k == ErrorKind::validation));
    }
  }
  CHECK(decoded > 0);
}

TEST_CASE("synth separated directory validates with exact counts") {
  TempDir tmp("kvd");
  SynthSpec spec = preset_spec(SynthPreset::separated);
  spec.n_img = 1000;
  spec.n_txt = 1000;
  spec.layers = {0, 5};
  generate_dump(spec, tmp.path());
  const ValidationSummary s = validate_dump_dir(tmp.path());
  REQUIRE(s.layers.size() == 2);
  for (const auto& l : s.layers) {
    CHECK(l.n_image == 1000);
    CHECK(l.n_text == 1000);
    CHECK(l.n_other == 0);
  }
  CHECK(s.layers[1].layer_index == 5);
}

TEST_CASE("manifest round trip and directory errors") {
  TempDir tmp("kvd");
  Manifest m;
  m.model_name = "m";
  m.benchmark_name = "b";
  m.hidden_dim = 4;
  m.layer_files = {{0, "layer0.kvd"}, {3, "layer3.kvd"}};
  write_manifest(m, tmp.path());
  CHECK(read_manifest(tmp.path()) == m);

  SUBCASE("missing layer file names the path") {
    write_layer_dump(random_dump(1, 5, 4, 0), tmp / "layer0.kvd");
    CHECK(kind_of([&] { validate_dump_dir(tmp.path()); }) == ErrorKind::missing_file);
    CHECK(error_text([&] { validate_dump_dir(tmp.path()); }).find("layer3.kvd") != std::string::npos);
  }
  SUBCASE("hidden_dim 512 against a 4096-wide file") {
    m.hidden_dim = 512;
    m.layer_files = {{0, "layer0.kvd"}};
    write_manifest(m, tmp.path());
    write_layer_dump(random_dump(1, 2, 4096, 0), tmp / "layer0.kvd");
    CHECK(kind_of([&] { validate_dump_dir(tmp.path()); }) == ErrorKind::dim_mismatch);
  }
  SUBCASE("embedded layer index must match the manifest key") {
    m.layer_files = {{0, "layer0.kvd"}};
    write_manifest(m, tmp.path());
    write_layer_dump(random_dump(1, 5, 4, 9), tmp / "layer0.kvd");
    CHECK(kind_of([&] { validate_dump_dir(tmp.path()); }) == ErrorKind::validation);
  }
  SUBCASE("no manifest") {
    fs::remove(tmp / "manifest.json");
    CHECK(kind_of([&] { validate_dump_dir(tmp.path()); }) == ErrorKind::validation);
  }
}

TEST_CASE("zero-count layer files are valid") {
  TempDir tmp("kvd");
  LayerDump d;
  d.dim = 8;
  write_layer_dump(d, tmp / "z.kvd");
  CHECK(fs::file_size(tmp / "z.kvd") == 20);
  CHECK(read_layer_dump(tmp / "z.kvd").count() == 0);
}
