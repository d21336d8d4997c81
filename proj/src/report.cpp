#include "kspace/report.hpp"

#include "kspace/error.hpp"
#include "kspace/kernels/compensated.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace kspace {
namespace {

constexpr Comparison kComparisonOrder[] = {Comparison::image_vs_text, Comparison::image_vs_image,
                                           Comparison::text_vs_text};

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::format, "table line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
  return v;
}

double mean_sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  kernels::CompensatedSum s;
  for (double x : v) s.add(x);
  return v.empty() ? 0.0 : s.value() / static_cast<double>(v.size());
}

std::string comparison_label(Comparison c) {
  switch (c) {
    case Comparison::image_vs_text: return "Image vs. Text";
    case Comparison::image_vs_image: return "Image vs. Image";
    case Comparison::text_vs_text: return "Text vs. Text";
  }
  return "";
}

}  // namespace

void ResultTable::validate() const {
  std::set<std::tuple<std::string, std::string, std::uint32_t, int>> seen;
  for (const auto& r : rows) {
    if (!seen.emplace(r.model, r.benchmark, r.layer, static_cast<int>(r.comparison)).second) {
      throw Error(ErrorKind::validation, "duplicate row (" + r.model + ", " + r.benchmark + ", layer " +
                                             std::to_string(r.layer) + ", " + to_string(r.comparison) + ")");
    }
  }
}

std::filesystem::path fixture_path(const std::string& name) {
  std::filesystem::path dir = KSPACE_FIXTURE_DIR;
  if (const char* env = std::getenv("KSPACE_FIXTURES"); env && *env) dir = env;
  return dir / (name + ".csv");
}

ResultTable parse_table_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "model,benchmark,layer,comparison,mmd,js") {
    throw Error(ErrorKind::format, "table CSV must start with header model,benchmark,layer,comparison,mmd,js");
  }
  ResultTable t;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 6) {
      throw Error(ErrorKind::format, "table line " + std::to_string(line_no) + ": expected 6 fields");
    }
    ResultRow r;
    r.model = cells[0];
    r.benchmark = cells[1];
    unsigned long layer = 0;
    const auto res = std::from_chars(cells[2].data(), cells[2].data() + cells[2].size(), layer);
    if (res.ec != std::errc() || res.ptr != cells[2].data() + cells[2].size()) {
      throw Error(ErrorKind::format, "table line " + std::to_string(line_no) + ": bad layer '" + cells[2] + "'");
    }
    r.layer = static_cast<std::uint32_t>(layer);
    r.comparison = comparison_from_string(cells[3]);
    r.mmd = parse_double(cells[4], line_no);
    r.js = parse_double(cells[5], line_no);
    t.rows.push_back(std::move(r));
  }
  t.validate();
  return t;
}

ResultTable read_table_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::missing_file, "cannot open table " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_table_csv(buf.str());
}

ResultTable load_fixture_table1() {
  const auto path = fixture_path("table1");
  try {
    ResultTable t = read_table_csv(path);
    if (t.rows.size() != 108) {
      throw Error(ErrorKind::distribution, "expected 108 rows, found " + std::to_string(t.rows.size()));
    }
    return t;
  } catch (const Error& e) {
    throw Error(ErrorKind::distribution, "table1 fixture unusable (" + path.string() + "): " + e.what());
  }
}

ResultTable table_from_results_json(const nlohmann::json& results) {
  if (!results.is_array()) throw Error(ErrorKind::format, "divergence results must be a JSON array");
  ResultTable t;
  for (const auto& o : results) {
    if (o.at("mmd").is_null() || o.at("js").is_null()) continue;
    ResultRow r;
    r.model = o.value("model", std::string("unknown"));
    r.benchmark = o.value("benchmark", std::string("unknown"));
    r.layer = o.at("layer").get<std::uint32_t>();
    r.comparison = comparison_from_string(o.at("comparison").get<std::string>());
    r.mmd = o.at("mmd").get<double>();
    r.js = o.at("js").get<double>();
    t.rows.push_back(std::move(r));
  }
  t.validate();
  return t;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw Error(ErrorKind::insufficient_data, "quantile of empty set");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

AggregateReport aggregate(const ResultTable& table, BoxplotGrouping grouping) {
  if (table.rows.empty()) throw Error(ErrorKind::insufficient_data, "aggregate: empty table");
  AggregateReport rep;
  std::vector<double> cross_mmd, img_mmd, txt_mmd, cross_js, img_js, txt_js;
  const ResultRow* best = nullptr;
  for (const auto& r : table.rows) {
    switch (r.comparison) {
      case Comparison::image_vs_text:
        cross_mmd.push_back(r.mmd);
        cross_js.push_back(r.js);
        if (!best || r.mmd > best->mmd ||
            (r.mmd == best->mmd &&
             std::tie(r.model, r.benchmark, r.layer) < std::tie(best->model, best->benchmark, best->layer))) {
          best = &r;
        }
        break;
      case Comparison::image_vs_image:
        img_mmd.push_back(r.mmd);
        img_js.push_back(r.js);
        break;
      case Comparison::text_vs_text:
        txt_mmd.push_back(r.mmd);
        txt_js.push_back(r.js);
        break;
    }
  }
  rep.n_cross = cross_mmd.size();
  rep.mean_cross_mmd = mean_sorted(cross_mmd);
  if (!cross_mmd.empty()) {
    std::vector<double> dev;
    for (double v : cross_mmd) dev.push_back((v - rep.mean_cross_mmd) * (v - rep.mean_cross_mmd));
    const double ss = mean_sorted(dev) * static_cast<double>(dev.size());
    rep.std_cross_mmd = std::sqrt(ss / static_cast<double>(dev.size()));
    rep.std_cross_mmd_sample = dev.size() > 1 ? std::sqrt(ss / static_cast<double>(dev.size() - 1)) : 0.0;
  }
  rep.mean_intra_img_mmd = mean_sorted(img_mmd);
  rep.mean_intra_txt_mmd = mean_sorted(txt_mmd);
  rep.mean_cross_js = mean_sorted(cross_js);
  rep.mean_intra_img_js = mean_sorted(img_js);
  rep.mean_intra_txt_js = mean_sorted(txt_js);
  if (best) {
    rep.max_cross_mmd = best->mmd;
    rep.max_model = best->model;
    rep.max_benchmark = best->benchmark;
    rep.max_layer = best->layer;
  }

  using Key = std::tuple<std::string, std::string, int>;
  std::map<Key, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& r : table.rows) {
    const std::string bench = grouping == BoxplotGrouping::per_model ? "all" : r.benchmark;
    auto& g = groups[{r.model, bench, static_cast<int>(r.comparison)}];
    g.first.push_back(r.mmd);
    g.second.push_back(r.js);
  }
  for (auto& [key, values] : groups) {
    for (int metric = 0; metric < 2; ++metric) {
      QuartileRecord q;
      q.model = std::get<0>(key);
      q.benchmark = std::get<1>(key);
      q.comparison = static_cast<Comparison>(std::get<2>(key));
      q.metric = metric == 0 ? "mmd" : "js";
      q.values = metric == 0 ? values.first : values.second;
      std::sort(q.values.begin(), q.values.end());
      q.min = q.values.front();
      q.q1 = quantile_sorted(q.values, 0.25);
      q.median = quantile_sorted(q.values, 0.5);
      q.q3 = quantile_sorted(q.values, 0.75);
      q.max = q.values.back();
      rep.groups.push_back(std::move(q));
    }
  }
  return rep;
}

TableFormat table_format_from_string(const std::string& s) {
  if (s == "csv") return TableFormat::csv;
  if (s == "json") return TableFormat::json;
  if (s == "md" || s == "markdown") return TableFormat::markdown;
  throw Error(ErrorKind::usage, "unknown table format '" + s + "' (csv|json|md)");
}

std::string render_table(const ResultTable& table, TableFormat format) {
  std::ostringstream out;
  switch (format) {
    case TableFormat::csv:
      out << "model,benchmark,layer,comparison,mmd,js\n";
      for (const auto& r : table.rows) {
        out << r.model << ',' << r.benchmark << ',' << r.layer << ',' << to_string(r.comparison) << ','
            << shortest(r.mmd) << ',' << shortest(r.js) << '\n';
      }
      break;
    case TableFormat::json: {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const auto& r : table.rows) {
        arr.push_back({{"model", r.model},
                       {"benchmark", r.benchmark},
                       {"layer", r.layer},
                       {"comparison", to_string(r.comparison)},
                       {"mmd", r.mmd},
                       {"js", r.js}});
      }
      out << arr.dump(2) << '\n';
      break;
    }
    case TableFormat::markdown: {
      // Per model: one row per (layer, comparison); columns are MMD per
      // benchmark followed by JS per benchmark.
      std::vector<std::string> models;
      std::map<std::string, std::vector<std::string>> benchmarks;
      std::map<std::tuple<std::string, std::string, std::uint32_t, int>, const ResultRow*> cell;
      for (const auto& r : table.rows) {
        if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
        auto& b = benchmarks[r.model];
        if (std::find(b.begin(), b.end(), r.benchmark) == b.end()) b.push_back(r.benchmark);
        cell[{r.model, r.benchmark, r.layer, static_cast<int>(r.comparison)}] = &r;
      }
      if (models.empty()) {
        out << "| Comparison | Layer | MMD | JS |\n|---|---|---|---|\n";
        break;
      }
      for (std::size_t mi = 0; mi < models.size(); ++mi) {
        const auto& model = models[mi];
        const auto& benches = benchmarks[model];
        if (mi > 0) out << '\n';
        out << "### " << model << "\n\n| Comparison | Layer |";
        for (const auto& b : benches) out << ' ' << b << " MMD |";
        for (const auto& b : benches) out << ' ' << b << " JS |";
        out << "\n|---|---|";
        for (std::size_t i = 0; i < 2 * benches.size(); ++i) out << "---|";
        out << '\n';
        std::set<std::uint32_t> layers;
        for (const auto& r : table.rows) {
          if (r.model == model) layers.insert(r.layer);
        }
        for (auto layer : layers) {
          for (auto c : kComparisonOrder) {
            bool any = false;
            for (const auto& b : benches) any = any || cell.count({model, b, layer, static_cast<int>(c)});
            if (!any) continue;
            out << "| " << comparison_label(c) << " | " << layer << " |";
            for (int metric = 0; metric < 2; ++metric) {
              for (const auto& b : benches) {
                const auto it = cell.find({model, b, layer, static_cast<int>(c)});
                if (it == cell.end()) {
                  out << "  |";
                } else {
                  const double v = metric == 0 ? it->second->mmd : it->second->js;
                  out << ' ' << (c == Comparison::image_vs_text ? "**" + fixed4(v) + "**" : fixed4(v)) << " |";
                }
              }
            }
            out << '\n';
          }
        }
      }
      break;
    }
  }
  return out.str();
}

nlohmann::ordered_json aggregate_to_json(const AggregateReport& r) {
  nlohmann::ordered_json j;
  j["n_cross"] = r.n_cross;
  j["mean_cross_mmd"] = r.mean_cross_mmd;
  j["std_cross_mmd"] = r.std_cross_mmd;
  j["std_cross_mmd_sample"] = r.std_cross_mmd_sample;
  j["mean_intra_img_mmd"] = r.mean_intra_img_mmd;
  j["mean_intra_txt_mmd"] = r.mean_intra_txt_mmd;
  j["mean_cross_js"] = r.mean_cross_js;
  j["mean_intra_img_js"] = r.mean_intra_img_js;
  j["mean_intra_txt_js"] = r.mean_intra_txt_js;
  j["max_cross_mmd"] = {{"value", r.max_cross_mmd},
                        {"model", r.max_model},
                        {"benchmark", r.max_benchmark},
                        {"layer", r.max_layer}};
  return j;
}

nlohmann::ordered_json boxplot_json(const AggregateReport& report) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& g : report.groups) {
    arr.push_back({{"model", g.model},
                   {"benchmark", g.benchmark},
                   {"comparison", to_string(g.comparison)},
                   {"metric", g.metric},
                   {"min", g.min},
                   {"q1", g.q1},
                   {"median", g.median},
                   {"q3", g.q3},
                   {"max", g.max},
                   {"values", g.values}});
  }
  return arr;
}

void export_boxplot_data(const AggregateReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out << boxplot_json(report).dump(2) << '\n';
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

nlohmann::ordered_json report_document(const ResultTable& table, const AggregateReport& report) {
  nlohmann::ordered_json doc;
  doc["rows"] = nlohmann::ordered_json::parse(render_table(table, TableFormat::json));
  doc["aggregate"] = aggregate_to_json(report);
  doc["boxplot"] = boxplot_json(report);
  return doc;
}

}  // namespace kspace
