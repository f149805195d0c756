#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "logvec/core/collection.hpp"
#include "logvec/core/segment.hpp"
#include "logvec/core/topk.hpp"
#include "logvec/index/bitmap.hpp"
#include "logvec/index/vector_index.hpp"

namespace logvec {

inline constexpr std::uint32_t kDefaultSliceRows = 256;

// Rows of one growing segment in WAL order, cut into fixed-size slices.
// Each full slice gets a temporary IVF index per vector field so searches
// over growing data avoid a full scan.
class GrowingSegmentBuffer {
 public:
  GrowingSegmentBuffer(const CollectionInfo& info, SegmentId segment, ShardId shard,
                       std::uint32_t slice_rows = kDefaultSliceRows, bool temp_indexes = true);

  // Appends one insert. Returns true when the append closed a slice.
  bool append(const Entity& e);
  void advance(HlcTimestamp ts);
  void seal(HlcTimestamp at);

  // Builds any missing temporary indexes for closed slices.
  std::size_t build_pending_temp_indexes(kernels::ScanStats* stats = nullptr);

  std::vector<Neighbor> search(std::size_t vector_field, std::span<const float> query, Metric metric,
                               std::size_t k, const SearchKnobs& knobs, const DeleteBitmap* deleted,
                               const RowPredicate* filter, kernels::ScanStats* stats = nullptr) const;

  const SegmentDescriptor& descriptor() const { return desc_; }
  SegmentDescriptor& descriptor() { return desc_; }
  const SegmentColumns& columns() const { return cols_; }
  std::size_t rows() const { return cols_.rows(); }
  std::size_t full_slices() const { return cols_.rows() / slice_rows_; }
  std::uint32_t slice_rows() const { return slice_rows_; }
  const VectorIndex* temp_index(std::size_t slice, std::size_t vector_field) const;
  bool sealed() const { return desc_.sealed(); }

 private:
  const CollectionInfo* info_;
  std::uint32_t slice_rows_;
  bool temp_indexes_;
  SegmentDescriptor desc_;
  SegmentColumns cols_;
  // temp_[slice][field]
  std::vector<std::vector<std::unique_ptr<VectorIndex>>> temp_;
};

}  // namespace logvec
