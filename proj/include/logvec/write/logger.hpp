#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "logvec/core/collection.hpp"
#include "logvec/core/hlc.hpp"
#include "logvec/log/broker.hpp"
#include "logvec/storage/metastore.hpp"
#include "logvec/storage/object_store.hpp"
#include "logvec/write/entity_map.hpp"
#include "logvec/write/hash_ring.hpp"
#include "logvec/write/options.hpp"

namespace logvec {

struct InsertAck {
  PrimaryKey pk;
  HlcTimestamp lsn;
  ShardId shard = 0;
  SegmentId segment = 0;
  std::uint64_t offset = 0;
};

struct DeleteAck {
  HlcTimestamp lsn;
  SegmentId segment = 0;
  std::uint64_t offset = 0;
};

// Entry point for writes of the shards it owns on the hash ring. A logger
// validates, stamps the LSN, picks the target segment, appends to the shard's
// WAL channel and records pk -> segment. It also decides when a growing
// segment is sealed and announces that on the same channel, so every
// subscriber sees the seal at the same position.
class Logger {
 public:
  Logger(LoggerId id, LogBroker& broker, Tso& tso, ObjectStore& store, MetaStore& meta,
         WriteOptions options);
  ~Logger();

  LoggerId id() const { return id_; }

  // Becomes the writer of the shard's channel, rebuilding the mapping from
  // flushed runs plus the WAL tail.
  void attach_shard(const CollectionInfo& info, ShardId shard);
  void detach_shard(CollectionId collection, ShardId shard);
  void detach_collection(CollectionId collection);
  bool owns(CollectionId collection, ShardId shard) const;

  InsertAck handle_insert(CollectionId collection, ShardId shard, const Entity& entity);
  DeleteAck handle_delete(CollectionId collection, ShardId shard, const PrimaryKey& pk);

  // Seals open segments idle for at least the inactivity window.
  int on_time(std::uint64_t now_ms);
  // Seals the shard's open segment, if any. Returns its id.
  std::optional<SegmentId> seal_open(CollectionId collection, ShardId shard, SealTrigger trigger);
  void on_segments_merged(CollectionId collection, const std::vector<SegmentId>& from, SegmentId to);

  void flush_mappings();
  std::optional<SegmentId> lookup(CollectionId collection, ShardId shard, const PrimaryKey& pk) const;
  std::optional<SegmentId> open_segment(CollectionId collection, ShardId shard) const;

  std::vector<ChannelWriter*> writers();

 private:
  struct Shard;
  Shard& shard(CollectionId collection, ShardId shard) const;
  SegmentId resolve(const Shard& s, SegmentId seg) const;
  void seal_locked(Shard& s, SealTrigger trigger);
  void maybe_flush(Shard& s);
  std::string state_key(CollectionId collection, ShardId shard) const;

  LoggerId id_;
  LogBroker& broker_;
  Tso& tso_;
  ObjectStore& store_;
  MetaStore& meta_;
  WriteOptions options_;
  mutable std::mutex mu_;
  std::map<std::pair<CollectionId, ShardId>, std::unique_ptr<Shard>> shards_;
};

std::string mapping_prefix(CollectionId collection, ShardId shard);
std::string segment_meta_key(CollectionId collection, SegmentId segment);

}  // namespace logvec
