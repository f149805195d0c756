#include "logvec/core/metric.hpp"

#include <cmath>

#include "logvec/core/error.hpp"

namespace logvec {

double score_raw(Metric metric, const float* a, const float* b, std::size_t dim) {
  switch (metric) {
    case Metric::kEuclidean: {
      double acc = 0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
      }
      return std::sqrt(acc);
    }
    case Metric::kInnerProduct: {
      double acc = 0;
      for (std::size_t i = 0; i < dim; ++i) acc += static_cast<double>(a[i]) * b[i];
      return acc;
    }
    case Metric::kAngular: {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t i = 0; i < dim; ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
      }
      if (na == 0 || nb == 0) throw Error(ErrorCode::kZeroVector, "angular metric on zero vector");
      return dot / (std::sqrt(na) * std::sqrt(nb));
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown metric");
}

double distance(Metric metric, std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "dimension mismatch: " + std::to_string(a.size()) +
                                                   " vs " + std::to_string(b.size()));
  }
  return score_raw(metric, a.data(), b.data(), a.size());
}

Metric parse_metric(std::string_view name) {
  if (name == "l2" || name == "euclidean" || name == "L2") return Metric::kEuclidean;
  if (name == "ip" || name == "inner_product" || name == "IP") return Metric::kInnerProduct;
  if (name == "cosine" || name == "angular" || name == "COSINE") return Metric::kAngular;
  throw Error(ErrorCode::kInvalidArgument, "unknown metric: " + std::string(name));
}

const char* metric_name(Metric metric) {
  switch (metric) {
    case Metric::kEuclidean: return "l2";
    case Metric::kInnerProduct: return "ip";
    case Metric::kAngular: return "cosine";
  }
  return "?";
}

}  // namespace logvec
