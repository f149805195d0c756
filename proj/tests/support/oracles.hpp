#pragma once

// Reference computations for tests. Selection is a full sort, independent of
// the engine's kernels, indexes and top-k collectors; brute_force_topk reuses
// the scalar metric so scores compare bit-exactly against engine output.

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "logvec/core/metric.hpp"

namespace logvec::testing {

std::vector<float> uniform_dataset(std::size_t rows, std::size_t dim, std::uint64_t seed);

// Naive long-double scorer following the textbook formulas.
long double oracle_score(Metric metric, const float* a, const float* b, std::size_t dim);

struct OracleHit {
  std::int64_t id;
  double score;
};

// Full sort of every admitted row by (closeness, id).
std::vector<OracleHit> brute_force_topk(Metric metric, std::span<const float> query,
                                        std::span<const float> data, std::size_t dim,
                                        std::size_t k,
                                        const std::function<bool(std::int64_t)>& admit = {});

// Live entities by pk, for end-to-end checks against the whole engine.
struct LiveOracle {
  std::size_t dim = 0;
  std::map<std::int64_t, std::vector<float>> rows;

  // Same selection as brute_force_topk, with ids being pks.
  std::vector<OracleHit> topk(Metric metric, std::span<const float> query, std::size_t k) const;
};

double recall_at_k(const std::vector<std::int64_t>& found, const std::vector<std::int64_t>& truth);

}  // namespace logvec::testing
