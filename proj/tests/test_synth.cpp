#include "kspace/dumpstore.hpp"
#include "kspace/error.hpp"
#include "kspace/rng.hpp"
#include "kspace/synth.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace kspace;
using kspace::testing::TempDir;

namespace {

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Monte Carlo estimate of MMD² from independent pairs.
double monte_carlo_mmd_sq(const SynthSpec& spec, double gamma, int pairs, std::uint64_t seed) {
  Rng r(seed);
  const double sa = std::sqrt(spec.cov_scale_img), sb = std::sqrt(spec.cov_scale_txt);
  auto draw = [&](bool image, std::vector<double>& v) {
    for (std::uint32_t j = 0; j < spec.dim; ++j) {
      v[j] = r.normal() * (image ? sa : sb) + (image && j == 0 ? spec.mean_shift : 0.0);
    }
  };
  std::vector<double> x(spec.dim), y(spec.dim);
  auto k = [&] {
    double d2 = 0;
    for (std::uint32_t j = 0; j < spec.dim; ++j) d2 += (x[j] - y[j]) * (x[j] - y[j]);
    return std::exp(-gamma * d2);
  };
  double aa = 0, bb = 0, ab = 0;
  for (int i = 0; i < pairs; ++i) {
    draw(true, x), draw(true, y), aa += k();
    draw(false, x), draw(false, y), bb += k();
    draw(true, x), draw(false, y), ab += k();
  }
  return (aa + bb - 2 * ab) / pairs;
}

}  // namespace

TEST_CASE("identical preset directory reports its token counts") {
  TempDir tmp("synth");
  SynthSpec spec = preset_spec(SynthPreset::identical);
  spec.n_img = spec.n_txt = 2000;
  spec.layers = {0, 1};
  CHECK(spec.dim == 50);
  const Manifest m = generate_dump(spec, tmp.path());
  CHECK(m.model_name == "synthetic");
  CHECK(m.benchmark_name == "identical");
  const auto s = validate_dump_dir(tmp.path());
  for (const auto& l : s.layers) {
    CHECK(l.n_image == 2000);
    CHECK(l.n_text == 2000);
  }
}

TEST_CASE("separated preset means differ by the shift along axis one") {
  SynthSpec spec = preset_spec(SynthPreset::separated);
  spec.n_img = spec.n_txt = 2000;
  const LayerDump d = generate_layer(spec, 0);
  double mi = 0, mt = 0, other = 0;
  for (std::size_t i = 0; i < d.count(); ++i) {
    (d.labels[i] == 1 ? mi : mt) += d.row(i)[0];
    other += (d.labels[i] == 1 ? 1.0 : -1.0) * d.row(i)[1];
  }
  mi /= 2000;
  mt /= 2000;
  CHECK(std::abs((mi - mt) - 10.0) <= 0.2);
  CHECK(std::abs(other / 2000) <= 0.2);
  // Image rows first; sample ids group rows in blocks of 100.
  CHECK(d.labels.front() == 1);
  CHECK(d.labels.back() == 0);
  CHECK(d.sample_ids[250] == 2);
}

TEST_CASE("same spec and seed give byte-identical files; layers draw fresh data") {
  TempDir a("synth"), b("synth");
  SynthSpec spec = preset_spec(SynthPreset::overlapping);
  spec.n_img = 300;
  spec.n_txt = 200;
  spec.layers = {3, 4};
  generate_dump(spec, a.path());
  generate_dump(spec, b.path());
  for (const char* f : {"layer3.kvd", "layer4.kvd", "manifest.json"}) {
    CHECK(read_bytes(a / f) == read_bytes(b / f));
  }
  CHECK(generate_layer(spec, 3).data != generate_layer(spec, 4).data);
}

TEST_CASE("clustered preset places image clusters apart") {
  SynthSpec spec = preset_spec(SynthPreset::clustered);
  spec.n_img = 300;
  spec.n_txt = 100;
  const LayerDump d = generate_layer(spec, 0);
  std::vector<std::vector<double>> means(3, std::vector<double>(spec.dim, 0.0));
  for (std::size_t i = 0; i < 300; ++i) {
    for (std::uint32_t j = 0; j < spec.dim; ++j) means[i / 100][j] += d.row(i)[j] / 100.0;
  }
  for (int p = 0; p < 3; ++p) {
    for (int q = p + 1; q < 3; ++q) {
      double d2 = 0;
      for (std::uint32_t j = 0; j < spec.dim; ++j) d2 += std::pow(means[p][j] - means[q][j], 2);
      CHECK(std::abs(std::sqrt(d2) - 20.0) < 1.5);
    }
  }
}

TEST_CASE("population MMD oracle") {
  SynthSpec spec = preset_spec(SynthPreset::identical);
  CHECK(population_mmd_oracle(spec, 0.02) == 0.0);

  spec = preset_spec(SynthPreset::overlapping);
  spec.dim = 1;
  spec.mean_shift = 1.0;
  CHECK(std::abs(population_mmd_oracle(spec, 1.0) - 0.402656358871) < 1e-11);
  // MMD² = (2/√5)(1 - exp(-c²/5)) for unit variances and γ = 1.
  CHECK(std::abs(std::pow(population_mmd_oracle(spec, 1.0), 2) - 2 / std::sqrt(5.0) * (1 - std::exp(-0.2))) <
        1e-12);
  spec.mean_shift = 60.0;
  CHECK(std::abs(population_mmd_oracle(spec, 1.0) - 0.945741609003) < 1e-11);
  spec.mean_shift = 1.0;
  CHECK(std::abs(monte_carlo_mmd_sq(spec, 1.0, 1'000'000, 5) - std::pow(population_mmd_oracle(spec, 1.0), 2)) <
        3e-3);

  spec.dim = 50;
  for (double shift : {1.0, 5.0}) {
    spec.mean_shift = shift;
    const double oracle = population_mmd_oracle(spec, 0.02);
    CHECK(std::abs(monte_carlo_mmd_sq(spec, 0.02, 200'000, 6) - oracle * oracle) < 1e-3);
  }

  SynthSpec clustered = preset_spec(SynthPreset::clustered);
  try {
    population_mmd_oracle(clustered, 0.02);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::unsupported);
  }
}

TEST_CASE("JS quadrature oracle") {
  CHECK(std::abs(js_quadrature_oracle_1d(0, 1, 0, 1)) < 1e-9);
  // The true value sits 1.25e-6 below one.
  CHECK(std::abs(js_quadrature_oracle_1d(0, 1, 10, 1) - 1.0) < 2e-6);
  CHECK(std::abs(js_quadrature_oracle_1d(0, 1, 10, 1) - 0.999998754715) < 1e-9);
  CHECK(std::abs(js_quadrature_oracle_1d(0, 1, 1, 1) - 0.160747219796) < 1e-9);
  CHECK(js_quadrature_oracle_1d(0, 1, 1, 1) == doctest::Approx(js_quadrature_oracle_1d(1, 1, 0, 1)));
}

TEST_CASE("spec validation") {
  SynthSpec spec = preset_spec(SynthPreset::identical);
  spec.mean_shift = 1.0;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = preset_spec(SynthPreset::separated);
  spec.n_img = 0;
  CHECK_THROWS_AS(spec.validate(), Error);
  CHECK_THROWS_AS(preset_from_string("nope"), Error);
  CHECK(preset_from_string("clustered") == SynthPreset::clustered);
}
