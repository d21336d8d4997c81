#include "kspace/cli.hpp"

#include "kspace/dumpstore.hpp"
#include "kspace/error.hpp"
#include "kspace/pipeline.hpp"
#include "kspace/report.hpp"
#include "kspace/synth.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

namespace kspace {
namespace {

struct RunFlags {
  std::string input;
  std::optional<std::string> out;
  std::optional<std::string> config;
  std::optional<std::string> layers;
  std::optional<int> pca_components;
  std::optional<double> perplexity;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_tokens;
  std::optional<int> iterations;
  std::optional<std::string> gamma;
  std::optional<int> n_projections;
  std::optional<int> bins;
  std::optional<int> permutations;
  std::optional<std::size_t> max_per_modality;
  std::optional<std::string> metric;
  std::optional<std::string> estimator;
  std::optional<int> threads;
  std::optional<std::uint64_t> tsne_seed, split_seed, projection_seed, intra_seed, perm_seed;
  bool skip_tsne = false;
};

enum OptionGroups : unsigned { kTsneOpts = 1, kDivergenceOpts = 2 };

void add_run_options(CLI::App* sub, RunFlags& f, unsigned groups) {
  sub->add_option("input", f.input, "Dump directory containing manifest.json");
  sub->add_option("--out,-o", f.out, "Output directory");
  sub->add_option("--config", f.config, "JSON config or a previous run-manifest.json");
  sub->add_option("--layers", f.layers, "Comma-separated layer indices (default: all)");
  sub->add_option("--pca-components", f.pca_components, "PCA components (default 50)");
  sub->add_option("--seed", f.seed, "Global seed; stage seeds derive from it (default 42)");
  sub->add_option("--threads", f.threads, "Worker threads (fallback: KSPACE_THREADS)");
  if (groups & kTsneOpts) {
    sub->add_option("--perplexity", f.perplexity, "t-SNE perplexity (default 30)");
    sub->add_option("--max-tokens", f.max_tokens, "t-SNE token cap (default 50000)");
    sub->add_option("--iterations", f.iterations, "t-SNE iterations (default 1000)");
    sub->add_option("--tsne-seed", f.tsne_seed, "Override the t-SNE seed");
  }
  if (groups & kDivergenceOpts) {
    sub->add_option("--gamma", f.gamma, "RBF gamma: auto, median or a positive number");
    sub->add_option("--n-projections", f.n_projections, "JS random projections (default 10)");
    sub->add_option("--bins", f.bins, "JS histogram bins (default 50)");
    sub->add_option("--permutations", f.permutations, "Permutation count, 0 disables (default 999)");
    sub->add_option("--max-per-modality", f.max_per_modality, "Tokens per modality cap (default 25000)");
    sub->add_option("--metric", f.metric, "mmd, js or both (default both)");
    sub->add_option("--estimator", f.estimator, "biased_sqrt (default) or unbiased_squared");
    sub->add_option("--split-seed", f.split_seed, "Override the modality subsampling seed");
    sub->add_option("--projection-seed", f.projection_seed, "Override the JS projection seed");
    sub->add_option("--intra-seed", f.intra_seed, "Override the intra-modality split seed");
    sub->add_option("--perm-seed", f.perm_seed, "Override the permutation seed");
  }
}

std::optional<int> env_threads() {
  const char* env = std::getenv("KSPACE_THREADS");
  if (!env || !*env) return std::nullopt;
  int v = 0;
  const std::string s = env;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || v < 0) {
    throw Error(ErrorKind::usage, "KSPACE_THREADS must be a non-negative integer, got '" + s + "'");
  }
  return v;
}

void apply_gamma(DivergenceConfig& d, const std::string& g) {
  if (g == "auto") {
    d.gamma_mode = GammaMode::auto_features;
    return;
  }
  if (g == "median") {
    d.gamma_mode = GammaMode::median;
    return;
  }
  double v = 0.0;
  const auto res = std::from_chars(g.data(), g.data() + g.size(), v);
  if (res.ec != std::errc() || res.ptr != g.data() + g.size()) {
    throw Error(ErrorKind::usage, "--gamma must be auto, median or a number, got '" + g + "'");
  }
  d.gamma_mode = GammaMode::fixed;
  d.gamma = v;
}

// Defaults, then the config file, then explicit flags.
RunConfig build_run_config(const RunFlags& f) {
  RunConfig c;
  if (f.config) c = run_config_from_file(*f.config);
  if (!f.input.empty()) c.input_dir = f.input;
  if (f.out) c.output_dir = *f.out;
  if (f.layers) c.layers = parse_layer_list(*f.layers);
  if (f.pca_components) c.pca_components = *f.pca_components;
  if (f.seed) c.global_seed = *f.seed;
  if (f.perplexity) c.tsne.perplexity = *f.perplexity;
  if (f.max_tokens) c.tsne.max_tokens = *f.max_tokens;
  if (f.iterations) c.tsne.iterations = *f.iterations;
  if (f.gamma) apply_gamma(c.divergence, *f.gamma);
  if (f.n_projections) c.divergence.n_projections = *f.n_projections;
  if (f.bins) c.divergence.histogram_bins = *f.bins;
  if (f.permutations) c.permutations = *f.permutations;
  if (f.max_per_modality) c.max_per_modality = *f.max_per_modality;
  if (f.metric) {
    nlohmann::json j = {{"metric", *f.metric}};
    run_config_update(c, j);
  }
  if (f.estimator) {
    nlohmann::json j = {{"divergence", {{"estimator", *f.estimator}}}};
    run_config_update(c, j);
  }
  if (f.tsne_seed) c.seed_overrides.tsne = *f.tsne_seed;
  if (f.split_seed) c.seed_overrides.split = *f.split_seed;
  if (f.projection_seed) c.seed_overrides.projection = *f.projection_seed;
  if (f.intra_seed) c.seed_overrides.intra = *f.intra_seed;
  if (f.perm_seed) c.seed_overrides.permutation = *f.perm_seed;
  if (f.threads) {
    c.threads = *f.threads;
  } else if (auto t = env_threads()) {
    c.threads = *t;
  }
  if (f.skip_tsne) c.stages.tsne = false;
  return c;
}

int run_stages(const RunFlags& f, const Stages& stages, bool honour_config_stages, std::ostream& out,
               std::ostream& err) {
  RunConfig c = build_run_config(f);
  if (!honour_config_stages) c.stages = stages;
  if (f.skip_tsne) c.stages.tsne = false;
  const RunOutcome r = run_pipeline(c, out);
  if (r.exit_code != 0) {
    err << "kspace: " << r.message << '\n';
  } else {
    out << "wrote artifacts to " << c.output_dir.string() << '\n';
  }
  return r.exit_code;
}

int cmd_validate(const std::string& dir, std::ostream& out) {
  const ValidationSummary s = validate_dump_dir(dir);
  out << "model " << s.manifest.model_name << ", benchmark " << s.manifest.benchmark_name << ", hidden_dim "
      << s.manifest.hidden_dim << '\n';
  out << "layer,dim,n_text,n_image,n_other,path\n";
  for (const auto& l : s.layers) {
    out << l.layer_index << ',' << l.dim << ',' << l.n_text << ',' << l.n_image << ',' << l.n_other << ','
        << l.path << '\n';
  }
  return 0;
}

struct ReportFlags {
  std::vector<std::string> inputs;
  std::optional<std::string> fixture;
  std::string format = "json";
  std::optional<std::string> out;
  std::optional<std::string> boxplot;
  bool by_benchmark = false;
};

ResultTable load_report_input(const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return read_table_csv(path);
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::missing_file, "cannot open results file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, "results file " + path + " is not valid JSON: " + e.what());
  }
  return table_from_results_json(j);
}

int cmd_report(const ReportFlags& f, std::ostream& out) {
  const TableFormat format = table_format_from_string(f.format);
  if (f.inputs.empty() && !f.fixture) {
    throw Error(ErrorKind::usage, "report needs results files or --fixture");
  }
  ResultTable table;
  if (f.fixture) {
    table = *f.fixture == "table1" ? load_fixture_table1() : read_table_csv(fixture_path(*f.fixture));
  }
  for (const auto& p : f.inputs) {
    const ResultTable t = load_report_input(p);
    table.rows.insert(table.rows.end(), t.rows.begin(), t.rows.end());
  }
  table.validate();
  const BoxplotGrouping grouping =
      f.by_benchmark ? BoxplotGrouping::per_model_benchmark : BoxplotGrouping::per_model;

  std::string rendered;
  std::optional<AggregateReport> agg;
  if (!table.rows.empty()) agg = aggregate(table, grouping);
  if (format == TableFormat::json) {
    nlohmann::ordered_json doc;
    if (agg) {
      doc = report_document(table, *agg);
    } else {
      doc["rows"] = nlohmann::ordered_json::array();
      doc["aggregate"] = nullptr;
      doc["boxplot"] = nlohmann::ordered_json::array();
    }
    rendered = doc.dump(2) + "\n";
  } else {
    rendered = render_table(table, format);
  }

  if (f.out) {
    std::ofstream o(*f.out, std::ios::binary | std::ios::trunc);
    if (!o) throw Error(ErrorKind::io, "cannot open " + *f.out + " for writing");
    o << rendered;
    if (!o) throw Error(ErrorKind::io, "write failed for " + *f.out);
    if (agg) {
      out << "rows " << table.rows.size() << ", cross comparisons " << agg->n_cross << '\n'
          << "mean cross MMD " << agg->mean_cross_mmd << " (std " << agg->std_cross_mmd << " population, "
          << agg->std_cross_mmd_sample << " sample)\n"
          << "mean intra-image MMD " << agg->mean_intra_img_mmd << ", mean intra-text MMD "
          << agg->mean_intra_txt_mmd << '\n'
          << "max cross MMD " << agg->max_cross_mmd << " at " << agg->max_model << '/' << agg->max_benchmark
          << " layer " << agg->max_layer << '\n';
    }
  } else {
    out << rendered;
  }
  if (f.boxplot && agg) export_boxplot_data(*agg, *f.boxplot);
  return 0;
}

struct SynthFlags {
  std::string preset = "separated";
  std::optional<std::size_t> n_img, n_txt;
  std::optional<std::uint32_t> dim;
  std::optional<double> shift;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> layers;
  std::string out;
};

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  SynthSpec spec = preset_spec(preset_from_string(f.preset));
  if (f.n_img) spec.n_img = *f.n_img;
  if (f.n_txt) spec.n_txt = *f.n_txt;
  if (f.dim) spec.dim = *f.dim;
  if (f.shift) spec.mean_shift = *f.shift;
  if (f.seed) spec.seed = *f.seed;
  if (f.layers) spec.layers = parse_layer_list(*f.layers);
  const Manifest m = generate_dump(spec, f.out);
  out << "wrote " << m.layer_files.size() << " layer(s) of " << spec.n_img << " image + " << spec.n_txt
      << " text tokens (dim " << spec.dim << ") to " << f.out << '\n';
  return 0;
}

}  // namespace

std::vector<std::uint32_t> parse_layer_list(const std::string& text) {
  std::vector<std::uint32_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b == std::string::npos) throw Error(ErrorKind::usage, "empty entry in layer list '" + text + "'");
    item = item.substr(b, e - b + 1);
    std::uint32_t v = 0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size()) {
      throw Error(ErrorKind::usage, "bad layer index '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw Error(ErrorKind::usage, "empty layer list");
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Measure the geometric gap between image and text key vectors", "kspace"};
  app.require_subcommand(1);

  std::string validate_dir;
  auto* validate = app.add_subcommand("validate", "Check a dump directory and print token counts");
  validate->add_option("input", validate_dir, "Dump directory")->required();

  RunFlags pre_f, tsne_f, div_f, run_f;
  auto* preprocess = app.add_subcommand("preprocess", "Standardize and fit PCA; writes layer<idx>.pca");
  add_run_options(preprocess, pre_f, 0);
  auto* tsne = app.add_subcommand("tsne", "Embed PCA-reduced tokens; writes layer<idx>.tsne.csv");
  add_run_options(tsne, tsne_f, kTsneOpts);
  auto* divergence = app.add_subcommand("divergence", "MMD and JS with controls; writes divergence.json");
  add_run_options(divergence, div_f, kDivergenceOpts);
  auto* run = app.add_subcommand("run", "Full pipeline");
  add_run_options(run, run_f, kTsneOpts | kDivergenceOpts);
  run->add_flag("--skip-tsne", run_f.skip_tsne, "Skip the t-SNE stage");

  ReportFlags rep_f;
  auto* report = app.add_subcommand("report", "Aggregate results into tables and statistics");
  report->add_option("inputs", rep_f.inputs, "divergence.json files or result CSV tables");
  report->add_option("--fixture", rep_f.fixture, "Named fixture table, e.g. table1");
  report->add_option("--format", rep_f.format, "csv, json or md (default json)");
  report->add_option("--out,-o", rep_f.out, "Output file (default stdout)");
  report->add_option("--boxplot", rep_f.boxplot, "Write box-plot quartiles as JSON");
  report->add_flag("--by-benchmark", rep_f.by_benchmark, "Group box plots by model and benchmark");

  SynthFlags syn_f;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dump directory");
  synth->add_option("--preset", syn_f.preset, "identical, overlapping, separated or clustered");
  synth->add_option("--n-img", syn_f.n_img, "Image tokens per layer");
  synth->add_option("--n-txt", syn_f.n_txt, "Text tokens per layer");
  synth->add_option("--dim", syn_f.dim, "Feature dimension");
  synth->add_option("--shift", syn_f.shift, "Mean shift along the first axis");
  synth->add_option("--seed", syn_f.seed, "Seed (default 42)");
  synth->add_option("--layers", syn_f.layers, "Comma-separated layer indices (default 0)");
  synth->add_option("--out,-o", syn_f.out, "Output directory")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "kspace: usage error: " << e.what() << '\n';
    return exit_code_for(ErrorKind::usage);
  }

  try {
    if (*validate) return cmd_validate(validate_dir, out);
    if (*preprocess) return run_stages(pre_f, {true, false, false, false}, false, out, err);
    if (*tsne) return run_stages(tsne_f, {false, true, false, false}, false, out, err);
    if (*divergence) return run_stages(div_f, {false, false, true, false}, false, out, err);
    if (*run) return run_stages(run_f, {}, true, out, err);
    if (*report) return cmd_report(rep_f, out);
    if (*synth) return cmd_synth(syn_f, out);
  } catch (const Error& e) {
    err << "kspace: " << to_string(e.kind()) << " error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "kspace: error: " << e.what() << '\n';
    return exit_code_for(ErrorKind::computation);
  }
  return exit_code_for(ErrorKind::usage);
}

}  // namespace kspace
