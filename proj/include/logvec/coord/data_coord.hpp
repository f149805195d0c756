#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "logvec/coord/inbox.hpp"
#include "logvec/core/collection.hpp"
#include "logvec/write/options.hpp"

namespace logvec {

// Registry of persisted segments. Learns about seals, merges and built
// indexes from the coord channel and keeps one descriptor per segment in the
// MetaStore under segment_meta_key().
class DataCoord {
 public:
  using MergeListener =
      std::function<void(CollectionId collection, const std::vector<SegmentId>& from, SegmentId to)>;

  DataCoord(LogBroker& broker, MetaStore& meta, WriteOptions options);

  std::size_t pump();
  bool caught_up() const { return inbox_.caught_up(); }

  // Sealed segments of the collection in id order; retired ones on request.
  std::vector<SegmentDescriptor> segments(CollectionId collection, bool include_retired = false) const;
  std::optional<SegmentDescriptor> segment(CollectionId collection, SegmentId segment) const;
  std::uint64_t live_rows(CollectionId collection) const;

  // Per shard, the small live segments the merge policy wants combined:
  // at least `merge_min_segments` of them, each under `merge_fraction` of
  // the row threshold.
  std::vector<std::vector<SegmentDescriptor>> merge_candidates(CollectionId collection) const;

  void on_merge(MergeListener listener) { merge_listener_ = std::move(listener); }

 private:
  void apply(const LogEntry& e);
  void put(const SegmentDescriptor& d);

  MetaStore& meta_;
  WriteOptions options_;
  Inbox inbox_;
  MergeListener merge_listener_;
};

}  // namespace logvec
