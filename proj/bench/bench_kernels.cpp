// Serial reference kernels against their tiled OpenMP counterparts.
// The Arg on parallel benchmarks is the OpenMP thread count.

#include "kspace/embed.hpp"
#include "kspace/kernels/gaussian_sum.hpp"
#include "kspace/kernels/kde.hpp"
#include "kspace/kernels/reference.hpp"
#include "kspace/kernels/tsne_forces.hpp"
#include "kspace/rng.hpp"

#include <benchmark/benchmark.h>
#include <omp.h>

using namespace kspace;

namespace {

Matrix gaussian(std::uint64_t seed, Eigen::Index n, Eigen::Index d) {
  Rng r(seed);
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = r.normal();
  }
  return m;
}

Eigen::MatrixXd indicators(Eigen::Index n, Eigen::Index cols) {
  Rng r(99);
  Eigen::MatrixXd z(n, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    std::vector<std::size_t> idx(n);
    for (Eigen::Index i = 0; i < n; ++i) idx[i] = i;
    r.shuffle(idx);
    for (Eigen::Index i = 0; i < n; ++i) z(idx[i], c) = i < n / 2 ? 1.0 / (n / 2) : -1.0 / (n - n / 2);
  }
  return z;
}

void set_threads(const benchmark::State& state) { omp_set_num_threads(static_cast<int>(state.range(0))); }

constexpr Eigen::Index kN = 2000, kDim = 50;

void BM_KernelSumSerial(benchmark::State& state) {
  const Matrix a = gaussian(1, kN, kDim), b = gaussian(2, kN, kDim);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::reference::gaussian_kernel_sum(a, b, 0.02));
}
void BM_KernelSumParallel(benchmark::State& state) {
  set_threads(state);
  const Matrix a = gaussian(1, kN, kDim), b = gaussian(2, kN, kDim);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::gaussian_kernel_sum(a, b, 0.02));
}

void BM_QuadFormsSerial(benchmark::State& state) {
  const Matrix x = gaussian(3, 1000, kDim);
  const Eigen::MatrixXd z = indicators(1000, 32);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::reference::gaussian_quadratic_forms(x, z, 0.02));
}
void BM_QuadFormsParallel(benchmark::State& state) {
  set_threads(state);
  const Matrix x = gaussian(3, 1000, kDim);
  const Eigen::MatrixXd z = indicators(1000, 32);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::gaussian_quadratic_forms(x, z, 0.02));
}

const Eigen::MatrixXd kBandwidth = Eigen::MatrixXd::Identity(2, 2) * 0.05;

void BM_KdeSerial(benchmark::State& state) {
  const Matrix s = gaussian(4, 5000, 2), g = gaussian(5, 4096, 2);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::reference::kde_evaluate(s, kBandwidth, g));
}
void BM_KdeParallel(benchmark::State& state) {
  set_threads(state);
  const Matrix s = gaussian(4, 5000, 2), g = gaussian(5, 4096, 2);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::kde_evaluate(s, kBandwidth, g));
}

struct TsneInputs {
  kernels::SparseAffinities p;
  Matrix y;
};

const TsneInputs& tsne_inputs() {
  static const TsneInputs in = [] {
    TsneInputs t;
    t.p = joint_probabilities(gaussian(6, 3000, 10), 30.0);
    t.y = gaussian(7, 3000, 2) * 10.0;
    return t;
  }();
  return in;
}

void BM_TsneGradientExact(benchmark::State& state) {
  const auto& in = tsne_inputs();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::reference::tsne_gradient(in.p, in.y, 1.0));
}
void BM_TsneGradientBarnesHut(benchmark::State& state) {
  set_threads(state);
  const auto& in = tsne_inputs();
  Matrix rep(in.y.rows(), 2), attr(in.y.rows(), 2);
  std::vector<double> z_parts;
  for (auto _ : state) {
    const kernels::QuadTree tree(in.y);
    kernels::repulsive_forces(tree, in.y, 0.5, rep, z_parts);
    kernels::attractive_forces(in.p, in.y, 1.0, attr);
    const double z = kernels::sum_in_order(z_parts);
    benchmark::DoNotOptimize(attr - rep / z);
  }
}

void thread_args(benchmark::internal::Benchmark* b) {
  b->Arg(1);
  if (omp_get_max_threads() > 1) b->Arg(omp_get_max_threads());
  b->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_KernelSumSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KernelSumParallel)->Apply(thread_args);
BENCHMARK(BM_QuadFormsSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_QuadFormsParallel)->Apply(thread_args);
BENCHMARK(BM_KdeSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KdeParallel)->Apply(thread_args);
BENCHMARK(BM_TsneGradientExact)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TsneGradientBarnesHut)->Apply(thread_args);

BENCHMARK_MAIN();
