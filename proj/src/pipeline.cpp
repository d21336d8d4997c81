#include "kspace/pipeline.hpp"

#include "kspace/error.hpp"
#include "kspace/preprocess.hpp"
#include "kspace/report.hpp"

#include <openssl/evp.h>
#include <omp.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

namespace kspace {
namespace fs = std::filesystem;

namespace {

const char* metric_name(MetricSelection m) {
  switch (m) {
    case MetricSelection::mmd: return "mmd";
    case MetricSelection::js: return "js";
    case MetricSelection::both: return "both";
  }
  return "both";
}

MetricSelection metric_from_name(const std::string& s) {
  if (s == "mmd") return MetricSelection::mmd;
  if (s == "js") return MetricSelection::js;
  if (s == "both") return MetricSelection::both;
  throw Error(ErrorKind::usage, "metric must be mmd, js or both, got '" + s + "'");
}

nlohmann::json plain(const nlohmann::ordered_json& j) { return nlohmann::json::parse(j.dump()); }

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw Error(ErrorKind::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::io, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string layer_file(std::uint32_t layer, const char* suffix) {
  return "layer" + std::to_string(layer) + suffix;
}

// Stage-tagged failure that keeps the original category.
struct StageFailure {
  std::string stage;
  ErrorKind kind;
  std::string what;
};

template <class F>
auto in_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw StageFailure{stage, e.kind(), e.what()};
  } catch (const std::bad_alloc&) {
    throw StageFailure{stage, ErrorKind::computation, "out of memory"};
  } catch (const std::exception& e) {
    throw StageFailure{stage, ErrorKind::computation, e.what()};
  }
}

}  // namespace

void RunConfig::validate() const {
  if (input_dir.empty()) throw Error(ErrorKind::usage, "input directory is required");
  if (output_dir.empty()) throw Error(ErrorKind::usage, "output directory (--out) is required");
  if (pca_components < 1) throw Error(ErrorKind::parameter, "pca_components must be >= 1");
  if (permutations < 0) throw Error(ErrorKind::parameter, "permutations must be >= 0");
  if (max_per_modality < 4) throw Error(ErrorKind::parameter, "max_per_modality must be >= 4");
  if (threads < 0) throw Error(ErrorKind::parameter, "threads must be >= 0");
  tsne.validate();
  divergence.validate();
}

StageSeeds RunConfig::seeds() const {
  const auto& o = seed_overrides;
  return {o.tsne.value_or(global_seed + kTsneSeedOffset), o.split.value_or(global_seed + kSplitSeedOffset),
          o.projection.value_or(global_seed + kProjectionSeedOffset),
          o.intra.value_or(global_seed + kIntraSeedOffset),
          o.permutation.value_or(global_seed + kPermutationSeedOffset)};
}

nlohmann::ordered_json tsne_config_to_json(const TsneConfig& c) {
  return {{"perplexity", c.perplexity},
          {"seed", c.seed},
          {"max_tokens", c.max_tokens},
          {"iterations", c.iterations},
          {"early_exaggeration", c.early_exaggeration},
          {"exaggeration_iterations", c.exaggeration_iterations},
          {"learning_rate", c.learning_rate},
          {"theta", c.theta},
          {"checkpoint_every", c.checkpoint_every}};
}

void tsne_config_update(TsneConfig& c, const nlohmann::json& j) {
  c.perplexity = j.value("perplexity", c.perplexity);
  c.seed = j.value("seed", c.seed);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.iterations = j.value("iterations", c.iterations);
  c.early_exaggeration = j.value("early_exaggeration", c.early_exaggeration);
  c.exaggeration_iterations = j.value("exaggeration_iterations", c.exaggeration_iterations);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.theta = j.value("theta", c.theta);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
}

nlohmann::ordered_json run_config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["input_dir"] = c.input_dir.string();
  j["output_dir"] = c.output_dir.string();
  j["layers"] = c.layers ? nlohmann::ordered_json(*c.layers) : nlohmann::ordered_json("all");
  j["pca_components"] = c.pca_components;
  j["permutations"] = c.permutations;
  j["global_seed"] = c.global_seed;
  auto opt = [](const std::optional<std::uint64_t>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  j["seed_overrides"] = {{"tsne", opt(c.seed_overrides.tsne)},
                         {"split", opt(c.seed_overrides.split)},
                         {"projection", opt(c.seed_overrides.projection)},
                         {"intra", opt(c.seed_overrides.intra)},
                         {"permutation", opt(c.seed_overrides.permutation)}};
  j["max_per_modality"] = c.max_per_modality;
  j["metric"] = metric_name(c.metrics);
  j["threads"] = c.threads;
  j["stages"] = {{"pca_sidecar", c.stages.pca_sidecar},
                 {"tsne", c.stages.tsne},
                 {"divergence", c.stages.divergence},
                 {"report", c.stages.report}};
  const StageSeeds s = c.seeds();
  TsneConfig t = c.tsne;
  t.seed = s.tsne;
  j["tsne"] = tsne_config_to_json(t);
  DivergenceConfig d = c.divergence;
  d.seed = s.projection;
  j["divergence"] = config_to_json(d);
  return j;
}

void run_config_update(RunConfig& c, const nlohmann::json& in) {
  if (!in.is_object()) throw Error(ErrorKind::usage, "config must be a JSON object");
  const nlohmann::json& j = in.contains("config") && in.at("config").is_object() ? in.at("config") : in;
  try {
    if (j.contains("input_dir")) c.input_dir = j.at("input_dir").get<std::string>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("layers")) {
      const auto& l = j.at("layers");
      if (l.is_string()) {
        if (l.get<std::string>() != "all") throw Error(ErrorKind::usage, "layers must be \"all\" or a list");
        c.layers.reset();
      } else {
        c.layers = l.get<std::vector<std::uint32_t>>();
      }
    }
    c.pca_components = j.value("pca_components", c.pca_components);
    c.permutations = j.value("permutations", c.permutations);
    c.global_seed = j.value("global_seed", c.global_seed);
    if (j.contains("seed_overrides")) {
      const auto& o = j.at("seed_overrides");
      auto read = [&](const char* key, std::optional<std::uint64_t>& dst) {
        if (!o.contains(key)) return;
        if (o.at(key).is_null()) dst.reset();
        else dst = o.at(key).get<std::uint64_t>();
      };
      read("tsne", c.seed_overrides.tsne);
      read("split", c.seed_overrides.split);
      read("projection", c.seed_overrides.projection);
      read("intra", c.seed_overrides.intra);
      read("permutation", c.seed_overrides.permutation);
    }
    c.max_per_modality = j.value("max_per_modality", c.max_per_modality);
    if (j.contains("metric")) c.metrics = metric_from_name(j.at("metric").get<std::string>());
    c.threads = j.value("threads", c.threads);
    if (j.contains("stages")) {
      const auto& s = j.at("stages");
      c.stages.pca_sidecar = s.value("pca_sidecar", c.stages.pca_sidecar);
      c.stages.tsne = s.value("tsne", c.stages.tsne);
      c.stages.divergence = s.value("divergence", c.stages.divergence);
      c.stages.report = s.value("report", c.stages.report);
    }
    if (j.contains("tsne")) tsne_config_update(c.tsne, j.at("tsne"));
    if (j.contains("divergence")) {
      auto merged = plain(config_to_json(c.divergence));
      merged.update(j.at("divergence"));
      c.divergence = config_from_json(merged);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::usage, std::string("bad config value: ") + e.what());
  }
}

RunConfig run_config_from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::usage, "cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::usage, "config file " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig c;
  run_config_update(c, j);
  return c;
}

std::vector<std::uint32_t> select_layers(const Manifest& manifest,
                                         const std::optional<std::vector<std::uint32_t>>& requested) {
  std::vector<std::uint32_t> valid;
  for (const auto& [layer, _] : manifest.layer_files) valid.push_back(layer);
  if (!requested) return valid;
  std::vector<std::uint32_t> bad;
  for (auto l : *requested) {
    if (!manifest.layer_files.count(l)) bad.push_back(l);
  }
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "invalid layer" << (bad.size() > 1 ? "s " : " ");
    for (std::size_t i = 0; i < bad.size(); ++i) msg << (i ? "," : "") << bad[i];
    msg << "; valid layers: ";
    for (std::size_t i = 0; i < valid.size(); ++i) msg << (i ? "," : "") << valid[i];
    throw Error(ErrorKind::usage, msg.str());
  }
  std::set<std::uint32_t> uniq(requested->begin(), requested->end());
  return {uniq.begin(), uniq.end()};
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string() + " for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::computation, "SHA-256 initialisation failed");
  }
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  char b[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(b, sizeof b, "%02x", md[i]);
    hex += b;
  }
  return hex;
}

RunOutcome run_pipeline(const RunConfig& config, std::ostream& log) {
  RunOutcome outcome;

  // Nothing is written until configuration and inputs pass validation.
  ValidationSummary summary;
  std::vector<std::uint32_t> layers;
  try {
    config.validate();
    layers = select_layers(read_manifest(config.input_dir), config.layers);
    summary = validate_dump_dir(config.input_dir, layers);
  } catch (const Error& e) {
    outcome.exit_code = exit_code_for(e.kind());
    outcome.message = "[validate] " + std::string(e.what());
    return outcome;
  }

  const StageSeeds seeds = config.seeds();
  TsneConfig tsne_cfg = config.tsne;
  tsne_cfg.seed = seeds.tsne;
  DivergenceConfig div_cfg = config.divergence;
  div_cfg.seed = seeds.projection;
  LayerDivergenceOptions div_opts;
  div_opts.metrics = config.metrics;
  div_opts.permutations = config.permutations;
  div_opts.intra_seed = seeds.intra;
  div_opts.perm_seed = seeds.permutation;

  const int previous_threads = omp_get_max_threads();
  if (config.threads > 0) omp_set_num_threads(config.threads);

  nlohmann::ordered_json manifest;
  manifest["config"] = run_config_to_json(config);
  manifest["stage_seeds"] = {{"tsne", seeds.tsne},
                             {"split", seeds.split},
                             {"projection", seeds.projection},
                             {"intra", seeds.intra},
                             {"permutation", seeds.permutation}};
  manifest["rng"] = "mt19937_64";
  manifest["threads_used"] = omp_get_max_threads();
  manifest["inputs"] = nlohmann::ordered_json::array();
  manifest["artifacts"] = nlohmann::ordered_json::array();
  manifest["layers"] = layers;

  auto record = [&](const fs::path& p) { manifest["artifacts"].push_back(p.filename().string()); };

  try {
    in_stage("setup", [&] {
      std::error_code ec;
      fs::create_directories(config.output_dir, ec);
      if (ec) throw Error(ErrorKind::io, "cannot create " + config.output_dir.string() + ": " + ec.message());
      const fs::path mpath = config.input_dir / "manifest.json";
      manifest["inputs"].push_back({{"file", "manifest.json"}, {"sha256", sha256_file(mpath)}});
      for (auto l : layers) {
        const auto& rel = summary.manifest.layer_files.at(l);
        manifest["inputs"].push_back({{"file", rel}, {"sha256", sha256_file(config.input_dir / rel)}});
      }
    });

    std::vector<DivergenceResult> results;
    for (auto l : layers) {
      const std::string tag = "layer " + std::to_string(l);
      const LayerDump dump = in_stage("load " + tag, [&] {
        return read_layer_dump(config.input_dir / summary.manifest.layer_files.at(l));
      });
      const PreprocessResult pre = in_stage("preprocess " + tag, [&] {
        return preprocess_layer(dump_matrix(dump), config.pca_components);
      });
      log << "layer " << l << ": " << dump.count() << " tokens, PCA k=" << pre.model.k()
          << " retains " << pre.model.retained_fraction() << " of variance\n";
      if (config.stages.pca_sidecar) {
        in_stage("preprocess " + tag, [&] {
          const fs::path p = config.output_dir / layer_file(l, ".pca");
          write_pca_sidecar(p, pre.stats, pre.model);
          record(p);
        });
      }
      if (config.stages.tsne) {
        in_stage("tsne " + tag, [&] {
          const EmbeddingResult emb = tsne_embed_capped(pre.reduced, dump.labels, tsne_cfg);
          const fs::path p = config.output_dir / layer_file(l, ".tsne.csv");
          export_embedding(emb, p);
          record(p);
          log << "layer " << l << ": t-SNE on " << emb.coords.rows() << " points, KL " << emb.final_kl << '\n';
        });
      }
      if (config.stages.divergence) {
        in_stage("divergence " + tag, [&] {
          const ModalitySplit split =
              build_split(pre.reduced, dump.labels, config.max_per_modality, seeds.split, l);
          const auto r = layer_divergence(split, div_cfg, div_opts);
          results.insert(results.end(), r.begin(), r.end());
          if (r[0].mmd) log << "layer " << l << ": cross MMD " << *r[0].mmd << '\n';
        });
      }
    }

    if (config.stages.divergence) {
      const ResultContext ctx{summary.manifest.model_name, summary.manifest.benchmark_name};
      const auto div_json = results_to_json(results, div_cfg, ctx, div_opts);
      in_stage("divergence", [&] {
        const fs::path p = config.output_dir / "divergence.json";
        write_text(p, div_json.dump(2) + "\n");
        record(p);
      });
      if (config.stages.report) {
        in_stage("report", [&] {
          const ResultTable table = table_from_results_json(plain(div_json));
          nlohmann::ordered_json doc;
          if (table.rows.empty()) {
            doc["rows"] = nlohmann::ordered_json::array();
            doc["aggregate"] = nullptr;
            doc["boxplot"] = nlohmann::ordered_json::array();
          } else {
            doc = report_document(table, aggregate(table));
          }
          const fs::path p = config.output_dir / "report.json";
          write_text(p, doc.dump(2) + "\n");
          record(p);
        });
      }
    }

    manifest["status"] = "ok";
    manifest["partial"] = false;
    manifest["failed_stage"] = nullptr;
    manifest["error"] = nullptr;
  } catch (const StageFailure& f) {
    outcome.exit_code = exit_code_for(f.kind);
    outcome.message = "[" + f.stage + "] " + f.what;
    manifest["status"] = "failed";
    manifest["partial"] = true;
    manifest["failed_stage"] = f.stage;
    manifest["error"] = {{"kind", std::string(to_string(f.kind))}, {"message", f.what}};
  }

  try {
    write_text(config.output_dir / "run-manifest.json", manifest.dump(2) + "\n");
  } catch (const Error& e) {
    if (outcome.exit_code == 0) {
      outcome.exit_code = exit_code_for(e.kind());
      outcome.message = "[manifest] " + std::string(e.what());
    }
  }
  if (config.threads > 0) omp_set_num_threads(previous_threads);
  outcome.manifest = std::move(manifest);
  return outcome;
}

}  // namespace kspace
