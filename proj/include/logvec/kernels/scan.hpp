#pragma once

// Data-parallel inner loops of the engine. Every kernel has a serial
// reference in `serial::` and an OpenMP version in `omp::`; both produce
// identical output because result order is a strict total order.

#include <cstdint>
#include <span>
#include <vector>

#include "logvec/core/metric.hpp"
#include "logvec/core/topk.hpp"
#include "logvec/index/bitmap.hpp"
#include "logvec/index/sq8.hpp"

namespace logvec::kernels {

struct ScanStats {
  std::uint64_t distance_evals = 0;
};

// Row-major vectors to scan, stored as floats or as SQ8 codes.
struct RowSource {
  std::span<const float> floats;
  std::span<const std::uint8_t> codes;
  const Sq8Codec* codec = nullptr;
  std::span<const std::uint32_t> ids;  // empty: row j has id j
  std::size_t dim = 0;

  std::size_t size() const {
    if (dim == 0) return 0;
    return codec ? codes.size() / dim : floats.size() / dim;
  }
  std::uint32_t id(std::size_t j) const {
    return ids.empty() ? static_cast<std::uint32_t>(j) : ids[j];
  }
};

namespace serial {

// Pushes every admitted row into an existing collector.
void scan_into(Metric metric, std::span<const float> query, const RowSource& rows,
               const RowFilter& filter, TopK& top, ScanStats* stats = nullptr);

std::vector<Neighbor> scan_topk(Metric metric, std::span<const float> query, const RowSource& rows,
                                std::size_t k, const RowFilter& filter, ScanStats* stats = nullptr);

std::vector<std::vector<Neighbor>> batch_scan_topk(Metric metric, std::span<const float> queries,
                                                   const RowSource& rows, std::size_t k,
                                                   const RowFilter& filter);

// Nearest centroid (squared L2, ties to the lower centroid id) for every row.
void assign_nearest(std::span<const float> data, std::span<const float> centroids, std::size_t dim,
                    std::span<std::uint32_t> assign, std::span<double> dist2);

}  // namespace serial

namespace omp {

std::vector<Neighbor> scan_topk(Metric metric, std::span<const float> query, const RowSource& rows,
                                std::size_t k, const RowFilter& filter, ScanStats* stats = nullptr);

std::vector<std::vector<Neighbor>> batch_scan_topk(Metric metric, std::span<const float> queries,
                                                   const RowSource& rows, std::size_t k,
                                                   const RowFilter& filter);

void assign_nearest(std::span<const float> data, std::span<const float> centroids, std::size_t dim,
                    std::span<std::uint32_t> assign, std::span<double> dist2);

}  // namespace omp

double squared_l2(const float* a, const float* b, std::size_t dim);

}  // namespace logvec::kernels
