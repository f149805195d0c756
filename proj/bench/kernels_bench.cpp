// Serial reference against the OpenMP kernels on the same inputs.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "logvec/kernels/scan.hpp"

namespace {

using namespace logvec;

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

constexpr std::size_t kDim = 32;

template <bool Parallel>
void BM_ScanTopk(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto data = random_floats(rows * kDim, 1);
  const auto query = random_floats(kDim, 2);
  kernels::RowSource src;
  src.floats = data;
  src.dim = kDim;
  for (auto _ : state) {
    auto hits = Parallel ? kernels::omp::scan_topk(Metric::kEuclidean, query, src, 50, {})
                         : kernels::serial::scan_topk(Metric::kEuclidean, query, src, 50, {});
    benchmark::DoNotOptimize(hits);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows));
}

template <bool Parallel>
void BM_BatchScan(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t queries = 64;
  const auto data = random_floats(rows * kDim, 1);
  const auto qs = random_floats(queries * kDim, 2);
  kernels::RowSource src;
  src.floats = data;
  src.dim = kDim;
  for (auto _ : state) {
    auto hits = Parallel ? kernels::omp::batch_scan_topk(Metric::kEuclidean, qs, src, 10, {})
                         : kernels::serial::batch_scan_topk(Metric::kEuclidean, qs, src, 10, {});
    benchmark::DoNotOptimize(hits);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows * queries));
}

template <bool Parallel>
void BM_AssignNearest(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t centroids = 64;
  const auto data = random_floats(rows * kDim, 1);
  const auto cents = random_floats(centroids * kDim, 3);
  std::vector<std::uint32_t> assign(rows);
  std::vector<double> dist(rows);
  for (auto _ : state) {
    if (Parallel) {
      kernels::omp::assign_nearest(data, cents, kDim, assign, dist);
    } else {
      kernels::serial::assign_nearest(data, cents, kDim, assign, dist);
    }
    benchmark::DoNotOptimize(assign.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows * centroids));
}

BENCHMARK_TEMPLATE(BM_ScanTopk, false)->Arg(10'000)->Arg(100'000);
BENCHMARK_TEMPLATE(BM_ScanTopk, true)->Arg(10'000)->Arg(100'000);
BENCHMARK_TEMPLATE(BM_BatchScan, false)->Arg(10'000);
BENCHMARK_TEMPLATE(BM_BatchScan, true)->Arg(10'000);
BENCHMARK_TEMPLATE(BM_AssignNearest, false)->Arg(10'000);
BENCHMARK_TEMPLATE(BM_AssignNearest, true)->Arg(10'000);

}  // namespace

BENCHMARK_MAIN();
