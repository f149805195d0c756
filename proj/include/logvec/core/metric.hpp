#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace logvec {

enum class Metric : std::uint8_t { kEuclidean = 0, kInnerProduct = 1, kAngular = 2 };

// Euclidean returns a distance (lower is closer). Inner product and angular
// return similarities (higher is closer); angular is cosine similarity.
// Throws kDimensionMismatch, or kZeroVector for angular on a zero vector.
double distance(Metric metric, std::span<const float> a, std::span<const float> b);

// Same as distance() without the dimension check, for hot loops.
double score_raw(Metric metric, const float* a, const float* b, std::size_t dim);

// Maps a score onto an ascending key: smaller key = closer.
inline double rank_key(Metric metric, double score) {
  return metric == Metric::kEuclidean ? score : -score;
}

Metric parse_metric(std::string_view name);
const char* metric_name(Metric metric);

}  // namespace logvec
