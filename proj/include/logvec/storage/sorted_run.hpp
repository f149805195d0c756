#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "logvec/core/primary_key.hpp"
#include "logvec/core/segment.hpp"

namespace logvec {

// Immutable sorted (pk, segment) array: "MSR1", u64 count, pairs, then a
// footer of every kStride-th pair's byte offset and a trailing u64 footer
// position. Segment id 0 marks a deleted pk.
class SortedRun {
 public:
  static constexpr std::uint32_t kStride = 64;
  static constexpr SegmentId kTombstone = 0;

  static std::vector<std::uint8_t> encode(const std::map<PrimaryKey, SegmentId>& entries);
  static SortedRun decode(std::vector<std::uint8_t> bytes);

  // nullopt when absent; kTombstone when deleted in this run.
  std::optional<SegmentId> find(const PrimaryKey& pk) const;
  std::uint64_t size() const { return count_; }
  std::vector<std::pair<PrimaryKey, SegmentId>> entries() const;

 private:
  std::vector<std::uint8_t> bytes_;
  std::uint64_t count_ = 0;
  std::vector<std::uint64_t> index_;
  std::uint64_t pairs_end_ = 0;
};

}  // namespace logvec
