#pragma once

// Cross-layer aggregation of divergence results into tables, headline
// statistics and box-plot data.

#include "kspace/divergence.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace kspace {

struct ResultRow {
  std::string model;
  std::string benchmark;
  std::uint32_t layer = 0;
  Comparison comparison = Comparison::image_vs_text;
  double mmd = 0.0;
  double js = 0.0;

  bool operator==(const ResultRow&) const = default;
};

struct ResultTable {
  std::vector<ResultRow> rows;

  /// Throws if a (model, benchmark, layer, comparison) key repeats.
  void validate() const;
  bool operator==(const ResultTable&) const = default;
};

/// Path of a shipped fixture table; KSPACE_FIXTURES overrides the directory.
std::filesystem::path fixture_path(const std::string& name = "table1");

/// CSV with header model,benchmark,layer,comparison,mmd,js.
ResultTable read_table_csv(const std::filesystem::path& path);
ResultTable parse_table_csv(const std::string& text);
ResultTable load_fixture_table1();

/// Rows from divergence.json arrays. Entries missing mmd or js are skipped.
ResultTable table_from_results_json(const nlohmann::json& results);

struct QuartileRecord {
  std::string model;
  std::string benchmark;  // "all" when benchmarks are pooled
  Comparison comparison = Comparison::image_vs_text;
  std::string metric;     // "mmd" or "js"
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  std::vector<double> values;  // ascending
};

enum class BoxplotGrouping { per_model, per_model_benchmark };

struct AggregateReport {
  std::size_t n_cross = 0;
  double mean_cross_mmd = 0.0;
  double std_cross_mmd = 0.0;         // population (divide by N)
  double std_cross_mmd_sample = 0.0;  // divide by N-1; 0 when N == 1
  double mean_intra_img_mmd = 0.0;
  double mean_intra_txt_mmd = 0.0;
  double mean_cross_js = 0.0;
  double mean_intra_img_js = 0.0;
  double mean_intra_txt_js = 0.0;
  double max_cross_mmd = 0.0;
  std::string max_model;
  std::string max_benchmark;
  std::uint32_t max_layer = 0;
  std::vector<QuartileRecord> groups;
};

/// Order-independent: values are sorted before compensated summation and the
/// argmax breaks ties by (model, benchmark, layer).
AggregateReport aggregate(const ResultTable& table, BoxplotGrouping grouping = BoxplotGrouping::per_model);

/// Linear interpolation between order statistics (position q * (n - 1)).
double quantile_sorted(const std::vector<double>& sorted, double q);

enum class TableFormat { csv, json, markdown };
TableFormat table_format_from_string(const std::string& s);

std::string render_table(const ResultTable& table, TableFormat format);

nlohmann::ordered_json aggregate_to_json(const AggregateReport& report);
nlohmann::ordered_json boxplot_json(const AggregateReport& report);
void export_boxplot_data(const AggregateReport& report, const std::filesystem::path& path);

/// Full JSON report document: rows, aggregate, boxplot.
nlohmann::ordered_json report_document(const ResultTable& table, const AggregateReport& report);

}  // namespace kspace
