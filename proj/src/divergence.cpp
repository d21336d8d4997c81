#include "kspace/divergence.hpp"

#include "kspace/error.hpp"
#include "kspace/kernels/gaussian_sum.hpp"
#include "kspace/kernels/kde.hpp"
#include "kspace/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kspace {
namespace {

constexpr Eigen::Index kPermutationBatch = 256;
constexpr std::size_t kMedianSubsample = 1000;

void require_rows(const Matrix& m, Eigen::Index min_rows, const char* what) {
  if (m.rows() < min_rows) {
    throw Error(ErrorKind::insufficient_data, std::string(what) + ": need at least " +
                                                  std::to_string(min_rows) + " rows, got " +
                                                  std::to_string(m.rows()));
  }
}

void require_same_width(const Matrix& a, const Matrix& b, const char* what) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorKind::shape, std::string(what) + ": feature widths differ (" +
                                      std::to_string(a.cols()) + " vs " + std::to_string(b.cols()) + ")");
  }
}

Matrix stack(const Matrix& a, const Matrix& b) {
  Matrix pooled(a.rows() + b.rows(), a.cols());
  pooled.topRows(a.rows()) = a;
  pooled.bottomRows(b.rows()) = b;
  return pooled;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

double mmd_from_sums(double s_aa, double s_bb, double s_ab, double n, double m, MmdEstimator est) {
  if (est == MmdEstimator::biased_sqrt) {
    const double sq = s_aa / (n * n) + s_bb / (m * m) - 2.0 * s_ab / (n * m);
    return std::sqrt(std::max(0.0, sq));
  }
  // Diagonal kernel entries are exp(0) = 1.
  return (s_aa - n) / (n * (n - 1.0)) + (s_bb - m) / (m * (m - 1.0)) - 2.0 * s_ab / (n * m);
}

// Squared-scale statistic used for permutation comparisons; monotone in the
// reported MMD for either estimator.
double mmd_statistic(double s_aa, double s_bb, double s_ab, double n, double m, MmdEstimator est) {
  if (est == MmdEstimator::biased_sqrt) {
    return s_aa / (n * n) + s_bb / (m * m) - 2.0 * s_ab / (n * m);
  }
  return mmd_from_sums(s_aa, s_bb, s_ab, n, m, est);
}

Matrix projection_directions(Eigen::Index k, int count, std::uint64_t seed) {
  Rng rng(seed);
  Matrix dirs(count, k);
  for (int p = 0; p < count; ++p) {
    double norm = 0.0;
    do {
      for (Eigen::Index c = 0; c < k; ++c) dirs(p, c) = rng.normal();
      norm = dirs.row(p).norm();
    } while (!(norm > 0.0));
    dirs.row(p) /= norm;
  }
  return dirs;
}

// Shared-edge histogram bins for each (pooled row, direction). A column whose
// projected range is zero is marked degenerate.
struct ProjectedBins {
  std::vector<std::vector<int>> bins;  // per direction, per pooled row
  std::vector<bool> degenerate;
};

ProjectedBins project_and_bin(const Matrix& pooled, const DivergenceConfig& config) {
  const Matrix dirs = projection_directions(pooled.cols(), config.n_projections, config.seed);
  const Eigen::MatrixXd proj = pooled * dirs.transpose();
  ProjectedBins out;
  out.bins.resize(static_cast<std::size_t>(config.n_projections));
  out.degenerate.assign(static_cast<std::size_t>(config.n_projections), false);
  const int nb = config.histogram_bins;
  for (int p = 0; p < config.n_projections; ++p) {
    const double lo = proj.col(p).minCoeff();
    const double hi = proj.col(p).maxCoeff();
    auto& b = out.bins[static_cast<std::size_t>(p)];
    b.resize(static_cast<std::size_t>(proj.rows()));
    if (!(hi > lo)) {
      out.degenerate[static_cast<std::size_t>(p)] = true;
      continue;
    }
    const double scale = static_cast<double>(nb) / (hi - lo);
    for (Eigen::Index i = 0; i < proj.rows(); ++i) {
      const int idx = static_cast<int>((proj(i, p) - lo) * scale);
      b[static_cast<std::size_t>(i)] = std::clamp(idx, 0, nb - 1);
    }
  }
  return out;
}

// Mean JS over directions for the grouping `in_a` (true rows form sample A).
double js_for_grouping(const ProjectedBins& pb, const std::vector<char>& in_a, const DivergenceConfig& config) {
  const auto nb = static_cast<std::size_t>(config.histogram_bins);
  std::vector<double> ha(nb), hb(nb);
  double total = 0.0;
  for (std::size_t p = 0; p < pb.bins.size(); ++p) {
    if (pb.degenerate[p]) continue;
    std::fill(ha.begin(), ha.end(), 0.0);
    std::fill(hb.begin(), hb.end(), 0.0);
    const auto& b = pb.bins[p];
    for (std::size_t i = 0; i < b.size(); ++i) {
      (in_a[i] ? ha : hb)[static_cast<std::size_t>(b[i])] += 1.0;
    }
    total += js_from_weights(ha, hb, config.epsilon);
  }
  return total / static_cast<double>(pb.bins.size());
}

std::vector<char> first_n_mask(std::size_t n, std::size_t total) {
  std::vector<char> mask(total, 0);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(n), 1);
  return mask;
}

Eigen::MatrixXd sample_covariance(const Matrix& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix c = x.rowwise() - mean;
  return (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

}  // namespace

std::string to_string(Comparison c) {
  switch (c) {
    case Comparison::image_vs_text: return "image_vs_text";
    case Comparison::image_vs_image: return "image_vs_image";
    case Comparison::text_vs_text: return "text_vs_text";
  }
  return "unknown";
}

Comparison comparison_from_string(const std::string& s) {
  if (s == "image_vs_text") return Comparison::image_vs_text;
  if (s == "image_vs_image") return Comparison::image_vs_image;
  if (s == "text_vs_text") return Comparison::text_vs_text;
  throw Error(ErrorKind::validation, "unknown comparison tag '" + s + "'");
}

void DivergenceConfig::validate() const {
  if (gamma_mode == GammaMode::fixed && !(gamma > 0.0)) {
    throw Error(ErrorKind::parameter, "gamma must be positive");
  }
  if (n_projections < 1) throw Error(ErrorKind::parameter, "n_projections must be >= 1");
  if (histogram_bins < 2) throw Error(ErrorKind::parameter, "histogram_bins must be >= 2");
  if (kde_grid_points < 2) throw Error(ErrorKind::parameter, "kde_grid_points must be >= 2");
  if (!(epsilon > 0.0)) throw Error(ErrorKind::parameter, "epsilon must be positive");
}

double DivergenceConfig::resolve_gamma(const Matrix& a, const Matrix& b) const {
  switch (gamma_mode) {
    case GammaMode::fixed:
      return gamma;
    case GammaMode::auto_features:
      return 1.0 / static_cast<double>(a.cols());
    case GammaMode::median: {
      const Matrix pooled = stack(a, b);
      std::vector<std::size_t> order(static_cast<std::size_t>(pooled.rows()));
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(seed);
      rng.shuffle(order);
      order.resize(std::min(order.size(), kMedianSubsample));
      std::vector<double> d2;
      for (std::size_t i = 0; i < order.size(); ++i) {
        for (std::size_t j = i + 1; j < order.size(); ++j) {
          d2.push_back((pooled.row(static_cast<Eigen::Index>(order[i])) -
                        pooled.row(static_cast<Eigen::Index>(order[j]))).squaredNorm());
        }
      }
      if (d2.empty()) throw Error(ErrorKind::insufficient_data, "median heuristic needs two rows");
      auto mid = d2.begin() + static_cast<std::ptrdiff_t>(d2.size() / 2);
      std::nth_element(d2.begin(), mid, d2.end());
      if (!(*mid > 0.0)) throw Error(ErrorKind::computation, "median heuristic: zero median distance");
      return 1.0 / *mid;
    }
  }
  return 1.0 / static_cast<double>(a.cols());
}

ModalitySplit build_split(const Matrix& z, std::span<const std::uint8_t> labels, std::size_t cap,
                          std::uint64_t seed, std::uint32_t layer_index) {
  if (static_cast<Eigen::Index>(labels.size()) != z.rows()) {
    throw Error(ErrorKind::shape, "build_split: label count differs from row count");
  }
  if (cap < 2) throw Error(ErrorKind::parameter, "per-modality cap must be >= 2");
  std::vector<std::size_t> img, txt;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == static_cast<std::uint8_t>(Modality::image)) img.push_back(i);
    else if (labels[i] == static_cast<std::uint8_t>(Modality::text)) txt.push_back(i);
  }
  if (img.size() < 2 || txt.size() < 2) {
    throw Error(ErrorKind::insufficient_data, "layer " + std::to_string(layer_index) + " has " +
                                                  std::to_string(img.size()) + " image and " +
                                                  std::to_string(txt.size()) +
                                                  " text tokens; need at least 2 of each");
  }
  auto cap_rows = [&](std::vector<std::size_t>& rows, std::uint64_t s) {
    if (rows.size() <= cap) return;
    const auto keep = sample_without_replacement(rows.size(), cap, s);
    std::vector<std::size_t> kept(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) kept[i] = rows[keep[i]];
    rows = std::move(kept);
  };
  cap_rows(img, seed);
  cap_rows(txt, seed + 1);

  ModalitySplit s;
  s.z_img = select_rows(z, img);
  s.z_txt = select_rows(z, txt);
  s.img_rows = std::move(img);
  s.txt_rows = std::move(txt);
  s.layer_index = layer_index;
  s.cap = cap;
  s.seed = seed;
  return s;
}

double mmd_rbf(const Matrix& a, const Matrix& b, double gamma, MmdEstimator estimator) {
  require_same_width(a, b, "mmd_rbf");
  require_rows(a, 2, "mmd_rbf");
  require_rows(b, 2, "mmd_rbf");
  if (!(gamma > 0.0)) throw Error(ErrorKind::parameter, "mmd_rbf: gamma must be positive");
  const double s_aa = kernels::gaussian_kernel_sum(a, a, gamma);
  const double s_bb = kernels::gaussian_kernel_sum(b, b, gamma);
  const double s_ab = kernels::gaussian_kernel_sum(a, b, gamma);
  return mmd_from_sums(s_aa, s_bb, s_ab, static_cast<double>(a.rows()), static_cast<double>(b.rows()),
                       estimator);
}

double js_from_weights(std::span<const double> p, std::span<const double> q, double epsilon) {
  const std::size_t n = p.size();
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sp += p[i] + epsilon;
    sq += q[i] + epsilon;
  }
  double kl_pm = 0.0, kl_qm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pi = (p[i] + epsilon) / sp;
    const double qi = (q[i] + epsilon) / sq;
    const double mi = 0.5 * (pi + qi);
    if (pi > 0.0) kl_pm += pi * std::log2(pi / mi);
    if (qi > 0.0) kl_qm += qi * std::log2(qi / mi);
  }
  return std::clamp(0.5 * kl_pm + 0.5 * kl_qm, 0.0, 1.0);
}

double js_random_projection(const Matrix& a, const Matrix& b, const DivergenceConfig& config) {
  config.validate();
  require_same_width(a, b, "js_random_projection");
  require_rows(a, 2, "js_random_projection");
  require_rows(b, 2, "js_random_projection");
  if (a.cols() < 1) throw Error(ErrorKind::shape, "js_random_projection: no features");
  const ProjectedBins pb = project_and_bin(stack(a, b), config);
  return js_for_grouping(pb, first_n_mask(static_cast<std::size_t>(a.rows()),
                                          static_cast<std::size_t>(a.rows() + b.rows())),
                         config);
}

double js_kde_lowdim(const Matrix& a, const Matrix& b, const DivergenceConfig& config) {
  config.validate();
  require_same_width(a, b, "js_kde_lowdim");
  const Eigen::Index d = a.cols();
  if (d > 2) {
    throw Error(ErrorKind::wrong_path, "js_kde_lowdim handles at most 2 features (got " + std::to_string(d) +
                                           "); use js_random_projection");
  }
  require_rows(a, 2, "js_kde_lowdim");
  require_rows(b, 2, "js_kde_lowdim");

  const Matrix pooled = stack(a, b);
  const Eigen::RowVectorXd lo = pooled.colwise().minCoeff();
  const Eigen::RowVectorXd hi = pooled.colwise().maxCoeff();
  const Eigen::MatrixXd pooled_cov = sample_covariance(pooled);
  const double pooled_scale = std::max(1.0, pooled_cov.diagonal().maxCoeff());
  bool any_spread = false;
  for (Eigen::Index c = 0; c < d; ++c) any_spread = any_spread || hi[c] > lo[c];
  if (!any_spread) return 0.0;

  // Scott's rule: bandwidth covariance = sample covariance * n^(-2/(d+4)).
  auto bandwidth = [&](const Matrix& x) {
    const double factor = std::pow(static_cast<double>(x.rows()), -1.0 / (static_cast<double>(d) + 4.0));
    Eigen::MatrixXd h = sample_covariance(x) * factor * factor;
    if (!(h.determinant() > 0.0)) h += Eigen::MatrixXd::Identity(d, d) * 1e-12 * pooled_scale;
    return h;
  };

  const int g = config.kde_grid_points;
  std::vector<Vector> axes(static_cast<std::size_t>(d));
  for (Eigen::Index c = 0; c < d; ++c) {
    const double pad = 3.0 * std::sqrt(pooled_cov(c, c));
    const double a0 = lo[c] - pad, a1 = hi[c] + pad;
    axes[static_cast<std::size_t>(c)] = Vector::LinSpaced(g, a0, a1 > a0 ? a1 : a0 + 1.0);
  }
  const Eigen::Index cells = d == 1 ? g : static_cast<Eigen::Index>(g) * g;
  Matrix grid(cells, d);
  for (Eigen::Index i = 0; i < cells; ++i) {
    grid(i, 0) = axes[0][d == 1 ? i : i / g];
    if (d == 2) grid(i, 1) = axes[1][i % g];
  }
  const Vector pa = kernels::kde_evaluate(a, bandwidth(a), grid);
  const Vector pb = kernels::kde_evaluate(b, bandwidth(b), grid);
  return js_from_weights(std::span<const double>(pa.data(), static_cast<std::size_t>(pa.size())),
                         std::span<const double>(pb.data(), static_cast<std::size_t>(pb.size())),
                         config.epsilon);
}

double js_divergence(const Matrix& a, const Matrix& b, const DivergenceConfig& config) {
  return a.cols() <= 2 ? js_kde_lowdim(a, b, config) : js_random_projection(a, b, config);
}

HalfSplit half_split(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  HalfSplit h;
  const std::size_t half = n / 2;
  h.first.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
  h.second.assign(order.begin() + static_cast<std::ptrdiff_t>(half), order.end());
  std::sort(h.first.begin(), h.first.end());
  std::sort(h.second.begin(), h.second.end());
  return h;
}

double intra_modality_baseline(const Matrix& x, const DivergenceConfig& config, Metric metric,
                               std::uint64_t split_seed) {
  if (x.rows() < 4) {
    throw Error(ErrorKind::insufficient_data, "intra-modality baseline needs at least 4 rows, got " +
                                                  std::to_string(x.rows()));
  }
  const HalfSplit h = half_split(static_cast<std::size_t>(x.rows()), split_seed);
  const Matrix a = select_rows(x, h.first);
  const Matrix b = select_rows(x, h.second);
  if (metric == Metric::mmd) return mmd_rbf(a, b, config.resolve_gamma(a, b), config.estimator);
  return js_divergence(a, b, config);
}

PermutationResult permutation_test(const Matrix& a, const Matrix& b, Metric metric, int n_perm,
                                   const DivergenceConfig& config, std::uint64_t perm_seed) {
  if (n_perm < 1) throw Error(ErrorKind::parameter, "permutation count must be >= 1");
  config.validate();
  require_same_width(a, b, "permutation_test");
  require_rows(a, 2, "permutation_test");
  require_rows(b, 2, "permutation_test");

  const auto n = static_cast<std::size_t>(a.rows());
  const auto total = static_cast<std::size_t>(a.rows() + b.rows());
  const Matrix pooled = stack(a, b);

  // Group-A membership for each permutation, generated up front so batching
  // does not affect the random stream.
  Rng rng(perm_seed);
  std::vector<std::vector<char>> groupings;
  groupings.reserve(static_cast<std::size_t>(n_perm));
  std::vector<std::size_t> order(total);
  for (int p = 0; p < n_perm; ++p) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::vector<char> mask(total, 0);
    for (std::size_t i = 0; i < n; ++i) mask[order[i]] = 1;
    groupings.push_back(std::move(mask));
  }

  PermutationResult result;
  result.n_perm = n_perm;
  std::vector<double> permuted(static_cast<std::size_t>(n_perm));

  if (metric == Metric::js) {
    const ProjectedBins pb = project_and_bin(pooled, config);
    result.observed = js_for_grouping(pb, first_n_mask(n, total), config);
    for (int p = 0; p < n_perm; ++p) {
      permuted[static_cast<std::size_t>(p)] = js_for_grouping(pb, groupings[static_cast<std::size_t>(p)], config);
    }
  } else {
    const double gamma = config.resolve_gamma(a, b);
    const double na = static_cast<double>(n);
    const double nb = static_cast<double>(total - n);
    // Column 0 of the first batch is the observed grouping.
    int done = -1;
    while (done < n_perm) {
      const int first = done;
      const int width = static_cast<int>(std::min<Eigen::Index>(kPermutationBatch, n_perm - first));
      Eigen::MatrixXd z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(total), width);
      for (int c = 0; c < width; ++c) {
        const int perm = first + c;
        for (std::size_t i = 0; i < total; ++i) {
          const char in_a = perm < 0 ? (i < n) : groupings[static_cast<std::size_t>(perm)][i];
          if (in_a) z(static_cast<Eigen::Index>(i), c) = 1.0;
        }
      }
      const auto forms = kernels::gaussian_quadratic_forms(pooled, z, gamma);
      for (int c = 0; c < width; ++c) {
        const double s_aa = forms.quad[c];
        const double zr = z.col(c).dot(forms.row_sums);
        const double s_ab = zr - s_aa;
        const double s_bb = forms.total - 2.0 * zr + s_aa;
        const double stat = mmd_statistic(s_aa, s_bb, s_ab, na, nb, config.estimator);
        const int perm = first + c;
        if (perm < 0) result.observed = stat;
        else permuted[static_cast<std::size_t>(perm)] = stat;
      }
      done = first + width;
    }
  }

  for (double v : permuted) {
    if (v >= result.observed) ++result.exceed;
  }
  result.p_value = static_cast<double>(1 + result.exceed) / static_cast<double>(n_perm + 1);
  return result;
}

std::array<DivergenceResult, 3> layer_divergence(const ModalitySplit& split, const DivergenceConfig& config,
                                                 const LayerDivergenceOptions& options) {
  config.validate();
  const bool want_mmd = options.metrics != MetricSelection::js;
  const bool want_js = options.metrics != MetricSelection::mmd;
  const double gamma = config.resolve_gamma(split.z_img, split.z_txt);

  auto measure = [&](Comparison c, const Matrix& a, const Matrix& b, std::uint64_t seed) {
    DivergenceResult r;
    r.comparison = c;
    r.layer_index = split.layer_index;
    r.n_a = static_cast<std::size_t>(a.rows());
    r.n_b = static_cast<std::size_t>(b.rows());
    r.seed = seed;
    r.gamma_resolved = gamma;
    if (want_mmd) r.mmd = mmd_rbf(a, b, gamma, config.estimator);
    if (want_js) r.js = js_divergence(a, b, config);
    return r;
  };

  DivergenceConfig fixed = config;
  fixed.gamma_mode = GammaMode::fixed;
  fixed.gamma = gamma;

  std::array<DivergenceResult, 3> out;
  out[0] = measure(Comparison::image_vs_text, split.z_img, split.z_txt, config.seed);
  if (options.permutations > 0) {
    const Metric m = want_mmd ? Metric::mmd : Metric::js;
    out[0].p_value = permutation_test(split.z_img, split.z_txt, m, options.permutations, fixed,
                                      options.perm_seed).p_value;
  }

  auto intra = [&](Comparison c, const Matrix& x) {
    if (x.rows() < 4) {
      throw Error(ErrorKind::insufficient_data, to_string(c) + " control needs at least 4 rows, got " +
                                                    std::to_string(x.rows()));
    }
    const HalfSplit h = half_split(static_cast<std::size_t>(x.rows()), options.intra_seed);
    return measure(c, select_rows(x, h.first), select_rows(x, h.second), options.intra_seed);
  };
  out[1] = intra(Comparison::image_vs_image, split.z_img);
  out[2] = intra(Comparison::text_vs_text, split.z_txt);
  return out;
}

nlohmann::ordered_json config_to_json(const DivergenceConfig& c) {
  nlohmann::ordered_json j;
  switch (c.gamma_mode) {
    case GammaMode::fixed: j["gamma"] = c.gamma; break;
    case GammaMode::auto_features: j["gamma"] = "auto"; break;
    case GammaMode::median: j["gamma"] = "median"; break;
  }
  j["n_projections"] = c.n_projections;
  j["histogram_bins"] = c.histogram_bins;
  j["kde_grid_points"] = c.kde_grid_points;
  j["epsilon"] = c.epsilon;
  j["seed"] = c.seed;
  j["estimator"] = c.estimator == MmdEstimator::biased_sqrt ? "biased_sqrt" : "unbiased_squared";
  return j;
}

DivergenceConfig config_from_json(const nlohmann::json& j) {
  DivergenceConfig c;
  if (j.contains("gamma")) {
    const auto& g = j.at("gamma");
    if (g.is_string()) {
      const auto s = g.get<std::string>();
      if (s == "auto") c.gamma_mode = GammaMode::auto_features;
      else if (s == "median") c.gamma_mode = GammaMode::median;
      else throw Error(ErrorKind::usage, "gamma must be 'auto', 'median' or a number, got '" + s + "'");
    } else {
      c.gamma_mode = GammaMode::fixed;
      c.gamma = g.get<double>();
    }
  }
  c.n_projections = j.value("n_projections", c.n_projections);
  c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
  c.kde_grid_points = j.value("kde_grid_points", c.kde_grid_points);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.seed = j.value("seed", c.seed);
  if (j.contains("estimator")) {
    const auto s = j.at("estimator").get<std::string>();
    if (s == "biased_sqrt") c.estimator = MmdEstimator::biased_sqrt;
    else if (s == "unbiased_squared") c.estimator = MmdEstimator::unbiased_squared;
    else throw Error(ErrorKind::usage, "unknown MMD estimator '" + s + "'");
  }
  return c;
}

nlohmann::ordered_json results_to_json(std::span<const DivergenceResult> results,
                                       const DivergenceConfig& config, const ResultContext& context,
                                       const LayerDivergenceOptions& options) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  auto opt = [](const std::optional<double>& v) -> nlohmann::ordered_json {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  for (const auto& r : results) {
    nlohmann::ordered_json o;
    o["comparison"] = to_string(r.comparison);
    o["layer"] = r.layer_index;
    o["mmd"] = opt(r.mmd);
    o["js"] = opt(r.js);
    o["n_a"] = r.n_a;
    o["n_b"] = r.n_b;
    o["p_value"] = opt(r.p_value);
    o["seed"] = r.seed;
    o["gamma_resolved"] = r.gamma_resolved;
    o["model"] = context.model;
    o["benchmark"] = context.benchmark;
    auto cfg = config_to_json(config);
    cfg["permutations"] = options.permutations;
    cfg["permutation_metric"] = options.metrics == MetricSelection::js ? "js" : "mmd";
    o["config"] = std::move(cfg);
    arr.push_back(std::move(o));
  }
  return arr;
}

}  // namespace kspace
