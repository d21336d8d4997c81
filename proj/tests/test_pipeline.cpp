#include "kspace/cli.hpp"
#include "kspace/dumpstore.hpp"
#include "kspace/pipeline.hpp"
#include "kspace/report.hpp"
#include "kspace/synth.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace kspace;
using kspace::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "kspace");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

void small_dump(const fs::path& dir, std::vector<std::uint32_t> layers = {0, 1}, std::size_t n = 300) {
  SynthSpec spec = preset_spec(SynthPreset::separated);
  spec.n_img = spec.n_txt = n;
  spec.layers = std::move(layers);
  generate_dump(spec, dir);
}

}  // namespace

TEST_CASE("defaults") {
  const RunConfig c;
  CHECK(c.pca_components == 50);
  CHECK(c.tsne.perplexity == 30.0);
  CHECK(c.global_seed == 42);
  CHECK(c.max_per_modality == 25000);
  CHECK(c.tsne.max_tokens == 50000);
  CHECK(c.permutations == 999);
  const StageSeeds s = c.seeds();
  CHECK(s.tsne == 42);
  CHECK(s.split == 43);
  CHECK(s.projection == 44);
  CHECK(s.intra == 45);
  CHECK(s.permutation == 46);
}

TEST_CASE("full run on the separated preset") {
  TempDir tmp("pipe");
  small_dump(tmp / "dump");
  const auto r = cli({"run", (tmp / "dump").string(), "--out", (tmp / "out").string(), "--permutations", "99",
                      "--iterations", "300"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  for (const char* f : {"layer0.pca", "layer1.pca", "layer0.tsne.csv", "layer1.tsne.csv", "divergence.json",
                        "report.json", "run-manifest.json"}) {
    CHECK(fs::exists(tmp / "out" / f));
  }
  const auto div = read_json(tmp / "out" / "divergence.json");
  CHECK(div.size() == 6);
  CHECK(div[0]["comparison"] == "image_vs_text");
  CHECK(div[0]["p_value"] == 0.01);
  // Intra controls at 150 tokens per half sit near the biased floor, so the margin is modest.
  CHECK(div[0]["mmd"].get<double>() > 5 * div[1]["mmd"].get<double>());

  const auto m = read_json(tmp / "out" / "run-manifest.json");
  CHECK(m["status"] == "ok");
  CHECK(m["partial"] == false);
  CHECK(m["stage_seeds"]["permutation"] == 46);
  CHECK(m["inputs"].size() == 3);
  CHECK(m["inputs"][0]["sha256"].get<std::string>().size() == 64);
  CHECK(m["config"]["tsne"]["perplexity"] == 30.0);
  CHECK(m["config"]["pca_components"] == 50);
  CHECK(m["config"]["max_per_modality"] == 25000);
  CHECK(m["config"]["divergence"]["gamma"] == "auto");

  const auto rep = read_json(tmp / "out" / "report.json");
  CHECK(rep["aggregate"]["n_cross"] == 2);
}

TEST_CASE("missing manifest fails validation and writes nothing") {
  TempDir tmp("pipe");
  fs::create_directories(tmp / "empty");
  const auto r = cli({"run", (tmp / "empty").string(), "--out", (tmp / "out").string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("[validate]") != std::string::npos);
  CHECK_FALSE(fs::exists(tmp / "out"));
}

TEST_CASE("invalid layers are a usage error naming them") {
  TempDir tmp("pipe");
  small_dump(tmp / "dump", {0, 1, 2, 4}, 50);
  const auto r = cli({"run", (tmp / "dump").string(), "--out", (tmp / "out").string(), "--layers", "3,99"});
  CHECK(r.code == 2);
  CHECK(r.err.find("99") != std::string::npos);
  CHECK(r.err.find("valid layers: 0,1,2,4") != std::string::npos);
  CHECK(cli({"run", (tmp / "dump").string(), "--out", "x", "--layers", "1,a"}).code == 2);
}

TEST_CASE("usage errors") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"run", "x", "--out", "y", "--no-such-flag"}).code == 2);
  CHECK(cli({"run", "x", "--out", "y", "--metric", "cosine"}).code == 2);
  CHECK(cli({"run", "x", "--out", "y", "--gamma", "wide"}).code == 2);
  CHECK(cli({"run", "x"}).code == 2);
  CHECK(cli({"report", "--format", "xlsx", "--fixture", "table1"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("identical runs produce byte-identical artifacts across thread counts") {
  TempDir tmp("pipe");
  small_dump(tmp / "dump", {0}, 400);
  const std::string dump = (tmp / "dump").string();
  const std::vector<std::string> common = {"--permutations", "49", "--skip-tsne"};
  auto run = [&](const std::string& out, const std::string& threads) {
    std::vector<std::string> args = {"run", dump, "--out", (tmp / out).string(), "--threads", threads};
    args.insert(args.end(), common.begin(), common.end());
    return cli(args).code;
  };
  REQUIRE(run("a", "1") == 0);
  REQUIRE(run("b", "3") == 0);
  CHECK(read_bytes(tmp / "a" / "divergence.json") == read_bytes(tmp / "b" / "divergence.json"));
  CHECK(read_bytes(tmp / "a" / "report.json") == read_bytes(tmp / "b" / "report.json"));

  // A finished run-manifest replays the run.
  const auto replay = cli({"run", "--config", (tmp / "a" / "run-manifest.json").string(), "--out",
                           (tmp / "c").string()});
  REQUIRE(replay.code == 0);
  CHECK(read_bytes(tmp / "a" / "divergence.json") == read_bytes(tmp / "c" / "divergence.json"));
}

TEST_CASE("flags override the config file, which overrides defaults") {
  TempDir tmp("pipe");
  small_dump(tmp / "dump", {0}, 200);
  std::ofstream(tmp / "cfg.json") << R"({"permutations": 19, "global_seed": 7, "metric": "mmd",
                                        "divergence": {"n_projections": 3}})";
  const auto r = cli({"divergence", (tmp / "dump").string(), "--out", (tmp / "out").string(), "--config",
                      (tmp / "cfg.json").string(), "--seed", "9", "--gamma", "0.1"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto m = read_json(tmp / "out" / "run-manifest.json");
  CHECK(m["config"]["permutations"] == 19);
  CHECK(m["config"]["global_seed"] == 9);
  CHECK(m["config"]["metric"] == "mmd");
  CHECK(m["config"]["divergence"]["gamma"] == 0.1);
  CHECK(m["config"]["divergence"]["n_projections"] == 3);
  CHECK(m["stage_seeds"]["split"] == 10);
  const auto div = read_json(tmp / "out" / "divergence.json");
  CHECK(div[0]["gamma_resolved"] == 0.1);
  CHECK(div[0]["js"].is_null());
  CHECK(div[0]["p_value"] == 0.05);
  CHECK_FALSE(fs::exists(tmp / "out" / "layer0.pca"));
  CHECK_FALSE(fs::exists(tmp / "out" / "report.json"));
}

TEST_CASE("KSPACE_THREADS is a fallback for --threads") {
  TempDir tmp("pipe");
  small_dump(tmp / "dump", {0}, 100);
  setenv("KSPACE_THREADS", "2", 1);
  auto r = cli({"preprocess", (tmp / "dump").string(), "--out", (tmp / "out").string()});
  REQUIRE(r.code == 0);
  CHECK(read_json(tmp / "out" / "run-manifest.json")["config"]["threads"] == 2);
  r = cli({"preprocess", (tmp / "dump").string(), "--out", (tmp / "out").string(), "--threads", "1"});
  CHECK(read_json(tmp / "out" / "run-manifest.json")["config"]["threads"] == 1);
  setenv("KSPACE_THREADS", "many", 1);
  CHECK(cli({"preprocess", (tmp / "dump").string(), "--out", (tmp / "out").string()}).code == 2);
  unsetenv("KSPACE_THREADS");
  CHECK(fs::exists(tmp / "out" / "layer0.pca"));
  CHECK_FALSE(fs::exists(tmp / "out" / "divergence.json"));
}

TEST_CASE("stage failures are tagged and flagged in the run-manifest") {
  TempDir tmp("pipe");
  small_dump(tmp / "dump", {0}, 40);  // 80 tokens: too few for perplexity 30
  const auto r = cli({"tsne", (tmp / "dump").string(), "--out", (tmp / "out").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("[tsne layer 0]") != std::string::npos);
  const auto m = read_json(tmp / "out" / "run-manifest.json");
  CHECK(m["status"] == "failed");
  CHECK(m["partial"] == true);
  CHECK(m["failed_stage"] == "tsne layer 0");
  CHECK(cli({"tsne", (tmp / "dump").string(), "--out", (tmp / "out2").string(), "--perplexity", "5",
             "--iterations", "50"}).code == 0);
  CHECK(fs::exists(tmp / "out2" / "layer0.tsne.csv"));
}

TEST_CASE("a layer's results ignore other layers' files") {
  TempDir tmp("pipe");
  small_dump(tmp / "dump", {0, 1}, 200);
  const std::string dump = (tmp / "dump").string();
  REQUIRE(cli({"divergence", dump, "--out", (tmp / "a").string(), "--layers", "0", "--permutations", "9"}).code == 0);
  std::ofstream(tmp / "dump" / "layer1.kvd", std::ios::trunc) << "garbage";
  REQUIRE(cli({"divergence", dump, "--out", (tmp / "b").string(), "--layers", "0", "--permutations", "9"}).code == 0);
  CHECK(read_bytes(tmp / "a" / "divergence.json") == read_bytes(tmp / "b" / "divergence.json"));
  fs::remove(tmp / "dump" / "layer1.kvd");
  REQUIRE(cli({"preprocess", dump, "--out", (tmp / "c").string(), "--layers", "0"}).code == 0);
  REQUIRE(cli({"preprocess", dump, "--out", (tmp / "d").string(), "--layers", "0"}).code == 0);
  CHECK(read_bytes(tmp / "c" / "layer0.pca") == read_bytes(tmp / "d" / "layer0.pca"));
  CHECK(cli({"validate", dump}).code == 3);
}

TEST_CASE("validate, synth and report subcommands") {
  TempDir tmp("pipe");
  auto r = cli({"synth", "--preset", "identical", "--n-img", "20", "--n-txt", "30", "--dim", "5", "--layers",
                "0,2", "--out", (tmp / "s").string()});
  REQUIRE(r.code == 0);
  r = cli({"validate", (tmp / "s").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("2,5,30,20,0,layer2.kvd") != std::string::npos);
  CHECK(cli({"synth", "--preset", "identical", "--shift", "2", "--out", (tmp / "t").string()}).code == 2);
  CHECK(cli({"synth", "--preset", "bogus", "--out", (tmp / "t").string()}).code == 2);

  r = cli({"report", "--fixture", "table1", "--format", "md", "--out", (tmp / "t.md").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("max cross MMD 1.054 at LLaVA/MMMU layer 2") != std::string::npos);
  CHECK(read_bytes(tmp / "t.md").find("### Qwen") != std::string::npos);

  r = cli({"report", "--fixture", "table1", "--format", "csv"});
  CHECK(r.code == 0);
  CHECK(parse_table_csv(r.out).rows.size() == 108);

  r = cli({"report", "--fixture", "table1", "--format", "json", "--out", (tmp / "r.json").string(), "--boxplot",
           (tmp / "box.json").string()});
  CHECK(r.code == 0);
  CHECK(read_json(tmp / "r.json")["aggregate"]["max_cross_mmd"]["layer"] == 2);
  CHECK(read_json(tmp / "box.json").size() == 12);

  CHECK(cli({"report", (tmp / "nope.json").string()}).code == 3);
  CHECK(cli({"report"}).code == 2);
}

TEST_CASE("report merges divergence outputs") {
  TempDir tmp("pipe");
  small_dump(tmp / "dump", {0, 1}, 150);
  REQUIRE(cli({"divergence", (tmp / "dump").string(), "--out", (tmp / "o").string(), "--permutations", "0"}).code ==
          0);
  const auto r = cli({"report", (tmp / "o" / "divergence.json").string(), "--format", "csv"});
  CHECK(r.code == 0);
  CHECK(parse_table_csv(r.out).rows.size() == 6);
  // The same results twice collide on their keys.
  CHECK(cli({"report", (tmp / "o" / "divergence.json").string(), (tmp / "o" / "divergence.json").string()}).code ==
        3);
}

TEST_CASE("run config JSON round trip") {
  RunConfig c;
  c.input_dir = "in";
  c.output_dir = "out";
  c.layers = std::vector<std::uint32_t>{1, 5};
  c.permutations = 5;
  c.seed_overrides.intra = 77;
  c.tsne.perplexity = 12.5;
  c.divergence.histogram_bins = 20;
  c.metrics = MetricSelection::js;
  RunConfig back;
  run_config_update(back, nlohmann::json::parse(run_config_to_json(c).dump()));
  CHECK(back.input_dir == c.input_dir);
  CHECK(back.layers == c.layers);
  CHECK(back.permutations == 5);
  CHECK(back.seed_overrides.intra == 77);
  CHECK_FALSE(back.seed_overrides.tsne.has_value());
  CHECK(back.tsne.perplexity == 12.5);
  CHECK(back.divergence.histogram_bins == 20);
  CHECK(back.metrics == MetricSelection::js);
  CHECK(back.seeds().intra == 77);
  CHECK(back.seeds().tsne == 42);
}

TEST_CASE("SHA-256 of a known string") {
  TempDir tmp("pipe");
  std::ofstream(tmp / "abc", std::ios::binary) << "abc";
  CHECK(sha256_file(tmp / "abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
