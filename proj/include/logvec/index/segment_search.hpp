#pragma once

#include <memory>
#include <span>
#include <vector>

#include "logvec/index/ivf.hpp"
#include "logvec/index/vector_index.hpp"

namespace logvec {

inline constexpr std::size_t kDefaultOversample = 4;

// One segment's searchable state: its raw vector column plus an optional
// built index over the same row ids.
struct SegmentSearchInput {
  std::span<const float> vectors;  // row-major, rows x dim
  std::size_t dim = 0;
  const VectorIndex* index = nullptr;
  const DeleteBitmap* deleted = nullptr;
  const RowPredicate* filter = nullptr;
  std::size_t oversample = kDefaultOversample;
  SearchKnobs knobs;
};

// Dispatches to the segment's index when it was built for `metric`, else
// scans the vector column. Deleted rows are excluded during the search. With
// a filter, k * oversample candidates are fetched and the predicate applied;
// if fewer than k survive the fetch doubles until k pass or the segment is
// exhausted.
std::vector<Neighbor> segment_search(const SegmentSearchInput& input, std::span<const float> query,
                                     Metric metric, std::size_t k,
                                     kernels::ScanStats* stats = nullptr);

inline constexpr std::uint32_t kDefaultTempNlist = 16;

// Lightweight IVF index over one full slice of a growing segment. Row ids
// are offsets inside the slice.
std::unique_ptr<IvfFlatIndex> build_temp_index(std::span<const float> slice_vectors,
                                               std::size_t dim, Metric metric,
                                               std::uint32_t nlist = kDefaultTempNlist,
                                               std::uint64_t seed = 42);

}  // namespace logvec
