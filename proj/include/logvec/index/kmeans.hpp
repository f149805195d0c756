#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace logvec {

struct KMeansResult {
  std::vector<float> centroids;  // k x dim
  std::vector<std::uint32_t> assign;
  // Sum of squared distances after every assignment step, final one last.
  std::vector<double> objective_history;
  std::size_t iterations = 0;
  std::uint64_t distance_evals = 0;
};

// Lloyd's algorithm with k-means++ seeding from `seed`. Stops when no
// centroid moves more than `tolerance` or after `max_iters` rounds, then
// assigns every row to its nearest centroid. Empty clusters keep their
// previous centroid. Throws kInvalidArgument if k is 0 or exceeds the row
// count.
KMeansResult kmeans(std::span<const float> data, std::size_t dim, std::size_t k,
                    std::size_t max_iters, std::uint64_t seed, double tolerance = 1e-4);

}  // namespace logvec
