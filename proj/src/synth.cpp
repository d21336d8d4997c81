#include "kspace/synth.hpp"

#include "kspace/error.hpp"
#include "kspace/rng.hpp"

#include <cmath>
#include <functional>
#include <numbers>

namespace kspace {
namespace {

double gaussian_kernel_expectation(double mean_gap_sq, double var_sum, double gamma, double dim) {
  const double s = 1.0 + 2.0 * gamma * var_sum;
  return std::pow(s, -0.5 * dim) * std::exp(-gamma * mean_gap_sq / s);
}

double normal_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

double simpson(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                        double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson(a, m, fa, flm, fm);
  const double right = simpson(m, b, fm, frm, fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  // Fixed panels first so narrow peaks are never skipped by the adaptive rule.
  constexpr int panels = 64;
  const double h = (b - a) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double x0 = a + p * h, x1 = x0 + h, xm = 0.5 * (x0 + x1);
    const double f0 = f(x0), fm = f(xm), f1 = f(x1);
    total += adaptive_simpson(f, x0, x1, f0, fm, f1, simpson(x0, x1, f0, fm, f1), tol / panels, 40);
  }
  return total;
}

}  // namespace

std::string to_string(SynthPreset p) {
  switch (p) {
    case SynthPreset::identical: return "identical";
    case SynthPreset::overlapping: return "overlapping";
    case SynthPreset::separated: return "separated";
    case SynthPreset::clustered: return "clustered";
  }
  return "unknown";
}

SynthPreset preset_from_string(const std::string& s) {
  if (s == "identical") return SynthPreset::identical;
  if (s == "overlapping") return SynthPreset::overlapping;
  if (s == "separated") return SynthPreset::separated;
  if (s == "clustered") return SynthPreset::clustered;
  throw Error(ErrorKind::usage, "unknown preset '" + s + "' (identical|overlapping|separated|clustered)");
}

SynthSpec preset_spec(SynthPreset preset) {
  SynthSpec s;
  s.preset = preset;
  switch (preset) {
    case SynthPreset::identical:
      s.dim = 50;
      s.mean_shift = 0.0;
      break;
    case SynthPreset::overlapping:
      s.dim = 50;
      s.mean_shift = 1.0;
      break;
    case SynthPreset::separated:
      s.dim = 4;
      s.mean_shift = 10.0;
      break;
    case SynthPreset::clustered:
      s.dim = 50;
      s.mean_shift = 10.0;
      s.n_clusters_img = 3;
      s.cluster_separation = 20.0;
      break;
  }
  return s;
}

void SynthSpec::validate() const {
  if (n_img < 1 || n_txt < 1) throw Error(ErrorKind::parameter, "synth: token counts must be positive");
  if (dim < 1) throw Error(ErrorKind::parameter, "synth: dim must be positive");
  if (!(mean_shift >= 0.0)) throw Error(ErrorKind::parameter, "synth: mean_shift must be non-negative");
  if (!(cov_scale_img > 0.0) || !(cov_scale_txt > 0.0)) {
    throw Error(ErrorKind::parameter, "synth: covariance scales must be positive");
  }
  if (preset == SynthPreset::identical && (mean_shift != 0.0 || cov_scale_img != cov_scale_txt)) {
    throw Error(ErrorKind::parameter, "synth: preset 'identical' requires shift 0 and equal covariance scales");
  }
  if (preset == SynthPreset::clustered) {
    if (n_clusters_img < 1) throw Error(ErrorKind::parameter, "synth: n_clusters_img must be >= 1");
    if (static_cast<std::uint32_t>(n_clusters_img) > dim - 1 && n_clusters_img > 1) {
      throw Error(ErrorKind::parameter, "synth: clustered preset needs dim > n_clusters_img");
    }
  }
  if (layers.empty()) throw Error(ErrorKind::parameter, "synth: at least one layer required");
  if (tokens_per_sample < 1) throw Error(ErrorKind::parameter, "synth: tokens_per_sample must be >= 1");
}

LayerDump generate_layer(const SynthSpec& spec, std::uint32_t layer_index) {
  spec.validate();
  Rng rng(spec.seed + layer_index);
  LayerDump d;
  d.layer_index = layer_index;
  d.dim = spec.dim;
  const std::size_t n = spec.n_img + spec.n_txt;
  d.labels.resize(n);
  d.sample_ids.resize(n);
  d.data.resize(n * spec.dim);
  const double sd_img = std::sqrt(spec.cov_scale_img);
  const double sd_txt = std::sqrt(spec.cov_scale_txt);
  const double offset = spec.cluster_separation / std::numbers::sqrt2;
  const bool clustered = spec.preset == SynthPreset::clustered && spec.n_clusters_img > 1;

  for (std::size_t i = 0; i < n; ++i) {
    const bool image = i < spec.n_img;
    d.labels[i] = static_cast<std::uint8_t>(image ? Modality::image : Modality::text);
    d.sample_ids[i] = static_cast<std::uint32_t>(i / spec.tokens_per_sample);
    std::size_t cluster_axis = 0;
    if (image && clustered) {
      const std::size_t c = i * static_cast<std::size_t>(spec.n_clusters_img) / spec.n_img;
      cluster_axis = c + 1;
    }
    for (std::uint32_t j = 0; j < spec.dim; ++j) {
      double v = rng.normal() * (image ? sd_img : sd_txt);
      if (image) {
        if (j == 0) v += spec.mean_shift;
        if (cluster_axis != 0 && j == cluster_axis) v += offset;
      }
      d.data[i * spec.dim + j] = static_cast<float>(v);
    }
  }
  return d;
}

Manifest generate_dump(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + out_dir.string());
  Manifest m;
  m.model_name = "synthetic";
  m.benchmark_name = to_string(spec.preset);
  m.hidden_dim = spec.dim;
  for (auto layer : spec.layers) {
    const std::string file = "layer" + std::to_string(layer) + ".kvd";
    write_layer_dump(generate_layer(spec, layer), out_dir / file);
    m.layer_files[layer] = file;
  }
  write_manifest(m, out_dir);
  return m;
}

double population_mmd_oracle(const SynthSpec& spec, double gamma) {
  if (spec.preset == SynthPreset::clustered) {
    throw Error(ErrorKind::unsupported, "no closed-form MMD oracle for the clustered preset");
  }
  if (!(gamma > 0.0)) throw Error(ErrorKind::parameter, "oracle gamma must be positive");
  const double d = spec.dim;
  const double va = spec.cov_scale_img, vb = spec.cov_scale_txt;
  const double kaa = gaussian_kernel_expectation(0.0, 2.0 * va, gamma, d);
  const double kbb = gaussian_kernel_expectation(0.0, 2.0 * vb, gamma, d);
  const double kab = gaussian_kernel_expectation(spec.mean_shift * spec.mean_shift, va + vb, gamma, d);
  return std::sqrt(std::max(0.0, kaa + kbb - 2.0 * kab));
}

double js_quadrature_oracle_1d(double mu_a, double sigma_a, double mu_b, double sigma_b) {
  if (!(sigma_a > 0.0) || !(sigma_b > 0.0)) throw Error(ErrorKind::parameter, "sigmas must be positive");
  const double mid = 0.5 * (mu_a + mu_b);
  const double spread = std::max(sigma_a, sigma_b) + 0.5 * std::abs(mu_a - mu_b);
  const double lo = mid - 12.0 * spread, hi = mid + 12.0 * spread;
  auto term = [&](double x) {
    const double p = normal_pdf(x, mu_a, sigma_a);
    const double q = normal_pdf(x, mu_b, sigma_b);
    const double m = 0.5 * (p + q);
    double v = 0.0;
    if (p > 0.0) v += 0.5 * p * std::log2(p / m);
    if (q > 0.0) v += 0.5 * q * std::log2(q / m);
    return v;
  };
  return std::clamp(integrate(term, lo, hi, 1e-10), 0.0, 1.0);
}

}  // namespace kspace
