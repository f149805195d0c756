#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "logvec/core/collection.hpp"
#include "logvec/read/filter.hpp"
#include "logvec/read/search.hpp"
#include "logvec/storage/metastore.hpp"
#include "logvec/storage/object_store.hpp"
#include "logvec/write/data_node.hpp"

namespace logvec {

// One WAL channel inside a checkpoint. Everything below `position` is
// accounted for: sealed rows sit in the sealed list, buffered rows are
// replayed from their segment's first offset, deletes live in the deltalog.
struct ChannelCheckpoint {
  ShardId shard = 0;
  std::string channel;
  SubscriberPosition position;
  std::vector<SegmentDescriptor> growing;
  std::map<SegmentId, std::uint64_t> growing_first_offset;
  std::string deltalog;  // object key, empty when no delete was seen
  std::uint64_t delete_count = 0;

  // Earliest WAL offset a restore or bootstrap from here reads.
  std::uint64_t replay_from() const;
  nlohmann::json to_json() const;
  static ChannelCheckpoint from_json(const nlohmann::json& j);
};

// Segment map of a collection at `ts`: routes to data, never the data.
// Sealed descriptors and deltalogs are referenced by key, so checkpoints
// with nothing in between share every object.
struct Checkpoint {
  CollectionId collection = 0;
  HlcTimestamp ts;
  std::vector<SegmentDescriptor> sealed;
  std::vector<ChannelCheckpoint> channels;

  nlohmann::json to_json() const;
  static Checkpoint from_json(const nlohmann::json& j);
  // Per-shard starting points for a consumer that joins from here.
  std::map<ShardId, ChannelBootstrap> bootstraps(const ObjectStore& store) const;
};

std::string checkpoint_prefix(CollectionId collection);
std::string checkpoint_key(CollectionId collection, HlcTimestamp ts);

// Captures the collection from the sealed segments registered so far and the
// state of the data nodes consuming its channels. The checkpoint timestamp is
// the newest entry consumed on any channel. Throws kUnavailable while a seal
// is waiting for its binlogs.
Checkpoint capture_checkpoint(const LogBroker& broker, ObjectStore& store, const CollectionInfo& info,
                              const std::vector<SegmentDescriptor>& sealed,
                              const std::vector<ChannelState>& channels);
// Writes `cp` as canonical JSON; rewriting the same ts is a no-op.
std::string write_checkpoint(ObjectStore& store, const Checkpoint& cp);
// Checkpoint keys of the collection, oldest first.
std::vector<std::pair<HlcTimestamp, std::string>> list_checkpoints(const ObjectStore& store,
                                                                   CollectionId collection);
Checkpoint read_checkpoint(const ObjectStore& store, const std::string& key);
std::optional<Checkpoint> latest_checkpoint(const ObjectStore& store, CollectionId collection,
                                            HlcTimestamp at_or_before = HlcTimestamp::max());

// Read-only state of a collection at one timestamp, searched by scanning.
class Snapshot {
 public:
  Snapshot(CollectionInfo info, HlcTimestamp ts, SegmentColumns rows, std::string checkpoint);

  const CollectionInfo& info() const { return info_; }
  HlcTimestamp ts() const { return ts_; }
  const SegmentColumns& rows() const { return rows_; }
  std::size_t size() const { return rows_.rows(); }
  const std::string& checkpoint() const { return checkpoint_; }
  // Exact top-k over the snapshot, ties broken by pk.
  std::vector<Hit> search(std::span<const float> query, std::size_t k, std::size_t vector_field = 0,
                          const FilterExpr* filter = nullptr) const;

 private:
  CollectionInfo info_;
  HlcTimestamp ts_;
  SegmentColumns rows_;
  std::string checkpoint_;
};

// Entities visible at `t`: inserts stamped at or before it, minus deletes
// stamped at or before it. Starts from the newest checkpoint not after `t`
// and replays the WAL from there. Throws kHistoryExpired when `t` precedes
// the retained history.
Snapshot restore_at(const LogBroker& broker, const ObjectStore& store, const MetaStore& meta,
                    const CollectionInfo& info, HlcTimestamp t);

struct GcReport {
  std::optional<HlcTimestamp> horizon;  // oldest restorable timestamp
  std::vector<std::string> deleted;     // object keys
  std::map<std::string, std::uint64_t> truncated;  // channel -> new base offset
};

inline constexpr std::uint64_t kNeverExpire = UINT64_MAX;

// Drops history older than `now_ms - expiration_ms`, keeping the newest
// checkpoint at or before that point and everything it needs.
GcReport gc_expired(LogBroker& broker, ObjectStore& store, MetaStore& meta, const CollectionInfo& info,
                    std::uint64_t now_ms, std::uint64_t expiration_ms);

std::optional<HlcTimestamp> history_horizon(const MetaStore& meta, CollectionId collection);

}  // namespace logvec
