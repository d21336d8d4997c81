#include "kspace/embed.hpp"
#include "kspace/error.hpp"
#include "kspace/rng.hpp"
#include "test_util.hpp"

#include <doctest.h>
#include <omp.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>

using namespace kspace;
using kspace::testing::TempDir;

namespace {

struct Clusters {
  Matrix x;
  std::vector<std::uint8_t> labels;
};

// Three 50-D unit Gaussians with centers mutually `gap` apart.
Clusters three_clusters(std::uint64_t seed, int per_cluster, double gap) {
  Rng r(seed);
  Clusters c;
  c.x.resize(3 * per_cluster, 50);
  const double offset = gap / std::sqrt(2.0);
  for (int k = 0; k < 3; ++k) {
    for (int i = 0; i < per_cluster; ++i) {
      const int row = k * per_cluster + i;
      for (int j = 0; j < 50; ++j) c.x(row, j) = r.normal() + (j == k ? offset : 0.0);
      c.labels.push_back(static_cast<std::uint8_t>(k));
    }
  }
  return c;
}

// Mean silhouette under the given labels, brute force.
double silhouette(const Matrix& y, const std::vector<std::uint8_t>& labels) {
  const Eigen::Index n = y.rows();
  int n_labels = 0;
  for (auto l : labels) n_labels = std::max(n_labels, l + 1);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> sum(n_labels, 0.0);
    std::vector<int> count(n_labels, 0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      sum[labels[j]] += (y.row(i) - y.row(j)).norm();
      ++count[labels[j]];
    }
    const int own = labels[i];
    const double a = sum[own] / count[own];
    double b = std::numeric_limits<double>::infinity();
    for (int l = 0; l < n_labels; ++l) {
      if (l != own && count[l] > 0) b = std::min(b, sum[l] / count[l]);
    }
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
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

}  // namespace

TEST_CASE("subsampling under the cap keeps every index in order") {
  const auto idx = subsample_tokens(100, 50000, 42);
  REQUIRE(idx.size() == 100);
  for (std::size_t i = 0; i < 100; ++i) CHECK(idx[i] == i);
}

TEST_CASE("subsampling over the cap is distinct and repeatable") {
  const auto a = subsample_tokens(60000, 50000, 42);
  const auto b = subsample_tokens(60000, 50000, 42);
  CHECK(a.size() == 50000);
  CHECK(std::set<std::size_t>(a.begin(), a.end()).size() == 50000);
  CHECK(a == b);
}

TEST_CASE("subsampling preserves modality proportions") {
  // First 30000 tokens image, last 30000 text.
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto idx = subsample_tokens(60000, 50000, seed);
    const auto image = std::count_if(idx.begin(), idx.end(), [](std::size_t i) { return i < 30000; });
    const double frac = static_cast<double>(image) / 30000.0;
    CHECK(std::abs(frac - 5.0 / 6.0) <= 0.03);
  }
}

TEST_CASE("t-SNE separates three well-spaced clusters") {
  TsneConfig cfg;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const Clusters c = three_clusters(seed, 200, 20.0);
    cfg.seed = 42 + seed;
    const EmbeddingResult r = tsne_embed(c.x, c.labels, cfg);
    CHECK(r.coords.rows() == 600);
    CHECK(r.coords.allFinite());
    CHECK(silhouette(r.coords, c.labels) >= 0.8);
  }
}

TEST_CASE("t-SNE is deterministic across runs and thread counts") {
  const Clusters c = three_clusters(7, 100, 20.0);
  TsneConfig cfg;
  cfg.iterations = 400;
  omp_set_num_threads(1);
  const EmbeddingResult a = tsne_embed(c.x, c.labels, cfg);
  omp_set_num_threads(4);
  const EmbeddingResult b = tsne_embed(c.x, c.labels, cfg);
  omp_set_num_threads(omp_get_num_procs());
  const EmbeddingResult d = tsne_embed(c.x, c.labels, cfg);
  CHECK((a.coords - b.coords).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(a.coords == d.coords);
  cfg.seed = 43;
  const EmbeddingResult other = tsne_embed(c.x, c.labels, cfg);
  CHECK(other.coords != a.coords);
}

TEST_CASE("KL checkpoints are finite, non-negative, and descend after exaggeration") {
  const Clusters c = three_clusters(8, 120, 20.0);
  const EmbeddingResult r = tsne_embed(c.x, c.labels, TsneConfig{});
  double kl_251 = -1.0;
  for (const auto& cp : r.kl_history) {
    CHECK(std::isfinite(cp.kl));
    CHECK(cp.kl >= 0.0);
    if (cp.iteration == 251) kl_251 = cp.kl;
  }
  REQUIRE(kl_251 >= 0.0);
  CHECK(r.kl_history.back().iteration == 1000);
  CHECK(r.final_kl <= kl_251);
}

TEST_CASE("embedding parameter and input checks") {
  const Clusters c = three_clusters(9, 10, 20.0);  // 30 points
  TsneConfig cfg;
  CHECK(kind_of([&] { tsne_embed(c.x, c.labels, cfg); }) == ErrorKind::parameter);
  cfg.perplexity = 9.0;  // 3*9 + 2 = 29 <= 30
  cfg.iterations = 50;
  CHECK_NOTHROW(tsne_embed(c.x, c.labels, cfg));
  Matrix bad = c.x;
  bad(3, 3) = std::nan("");
  CHECK(kind_of([&] { tsne_embed(bad, c.labels, cfg); }) == ErrorKind::validation);
  TsneConfig neg;
  neg.learning_rate = -1.0;
  CHECK(kind_of([&] { neg.validate(); }) == ErrorKind::parameter);
  neg = TsneConfig{};
  neg.theta = 1.5;
  CHECK(kind_of([&] { neg.validate(); }) == ErrorKind::parameter);
}

TEST_CASE("capped embedding obeys the cap law") {
  const Clusters c = three_clusters(10, 150, 20.0);
  TsneConfig cfg;
  cfg.max_tokens = 300;
  cfg.iterations = 100;
  const EmbeddingResult r = tsne_embed_capped(c.x, c.labels, cfg);
  CHECK(r.coords.rows() == 300);
  CHECK(std::set<std::size_t>(r.source_indices.begin(), r.source_indices.end()).size() == 300);
  for (std::size_t i = 0; i < r.labels.size(); ++i) CHECK(r.labels[i] == c.labels[r.source_indices[i]]);
  cfg.max_tokens = 1000;
  CHECK(tsne_embed_capped(c.x, c.labels, cfg).coords.rows() == 450);
}

TEST_CASE("embedding CSV export") {
  TempDir tmp("emb");
  EmbeddingResult r;
  r.coords.resize(3, 2);
  r.coords << 1.0 / 3.0, -2.5, 123.456789012345, 1e-7, -0.000123456789123, 42.0;
  r.labels = {1, 0, 2};
  r.source_indices = {5, 9, 11};
  export_embedding(r, tmp / "e.csv");

  std::ifstream in(tmp / "e.csv");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 4);

  const EmbeddingResult back = read_embedding_csv(tmp / "e.csv");
  CHECK(back.labels == r.labels);
  CHECK(back.source_indices == r.source_indices);
  // Nine significant digits: relative error below 1e-8.
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (int d = 0; d < 2; ++d) {
      CHECK(std::abs(back.coords(i, d) - r.coords(i, d)) <= 1e-8 * std::max(1.0, std::abs(r.coords(i, d))));
    }
  }
}

TEST_CASE("joint probabilities are symmetric and sum to one") {
  const Clusters c = three_clusters(11, 40, 5.0);
  const auto p = joint_probabilities(c.x, 10.0);
  double total = 0.0;
  std::map<std::pair<std::int64_t, std::int64_t>, double> entries;
  for (std::int64_t i = 0; i < p.rows(); ++i) {
    for (auto e = p.row_ptr[i]; e < p.row_ptr[i + 1]; ++e) {
      total += p.vals[e];
      entries[{i, p.cols[e]}] = p.vals[e];
      CHECK(p.cols[e] != i);
    }
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
  for (const auto& [key, v] : entries) {
    const auto it = entries.find({key.second, key.first});
    REQUIRE(it != entries.end());
    CHECK(std::abs(it->second - v) < 1e-15);
  }
}
