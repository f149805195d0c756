#include "logvec/index/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "logvec/core/error.hpp"
#include "logvec/kernels/scan.hpp"

namespace logvec {
namespace {

std::vector<float> seed_plus_plus(std::span<const float> data, std::size_t dim, std::size_t n,
                                  std::size_t k, std::mt19937_64& rng, std::uint64_t& evals) {
  std::vector<float> centroids;
  centroids.reserve(k * dim);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t first = pick(rng);
  centroids.insert(centroids.end(), data.begin() + first * dim, data.begin() + (first + 1) * dim);

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) {
    d2[i] = kernels::squared_l2(data.data() + i * dim, centroids.data(), dim);
  }
  evals += n;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t chosen = 0;
    if (total > 0) {
      double target = unit(rng) * total;
      chosen = n;
      std::size_t last_positive = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0) continue;
        last_positive = i;
        if (target < d2[i]) {
          chosen = i;
          break;
        }
        target -= d2[i];
      }
      if (chosen == n) chosen = last_positive;
    } else {
      chosen = c % n;
    }
    const float* row = data.data() + chosen * dim;
    centroids.insert(centroids.end(), row, row + dim);
    const float* cent = centroids.data() + c * dim;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], kernels::squared_l2(data.data() + i * dim, cent, dim));
    }
    evals += n;
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans(std::span<const float> data, std::size_t dim, std::size_t k,
                    std::size_t max_iters, std::uint64_t seed, double tolerance) {
  if (dim == 0 || data.size() % dim != 0) {
    throw Error(ErrorCode::kDimensionMismatch, "k-means input is not a whole number of rows");
  }
  const std::size_t n = data.size() / dim;
  if (k == 0 || k > n) {
    throw Error(ErrorCode::kInvalidArgument, "k-means needs 1 <= k <= rows (k=" +
                                                 std::to_string(k) + ", rows=" +
                                                 std::to_string(n) + ")");
  }
  KMeansResult res;
  std::mt19937_64 rng(seed);
  res.centroids = seed_plus_plus(data, dim, n, k, rng, res.distance_evals);
  res.assign.resize(n);
  std::vector<double> d2(n);

  auto assign_step = [&] {
    kernels::omp::assign_nearest(data, res.centroids, dim, res.assign, d2);
    res.distance_evals += static_cast<std::uint64_t>(n) * k;
    res.objective_history.push_back(std::accumulate(d2.begin(), d2.end(), 0.0));
  };

  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);
  for (std::size_t it = 0; it < max_iters; ++it) {
    assign_step();
    ++res.iterations;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = res.assign[i];
      ++counts[c];
      for (std::size_t d = 0; d < dim; ++d) sums[c * dim + d] += data[i * dim + d];
    }
    double max_shift = 0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      double shift = 0;
      for (std::size_t d = 0; d < dim; ++d) {
        const float updated = static_cast<float>(sums[c * dim + d] / counts[c]);
        const double delta = static_cast<double>(updated) - res.centroids[c * dim + d];
        shift += delta * delta;
        res.centroids[c * dim + d] = updated;
      }
      max_shift = std::max(max_shift, std::sqrt(shift));
    }
    if (max_shift < tolerance) break;
  }
  assign_step();
  return res;
}

}  // namespace logvec
