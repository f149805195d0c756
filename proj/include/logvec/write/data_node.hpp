#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <vector>

#include "logvec/core/collection.hpp"
#include "logvec/log/broker.hpp"
#include "logvec/storage/metastore.hpp"
#include "logvec/storage/object_store.hpp"
#include "logvec/write/delete_log.hpp"
#include "logvec/write/growing_buffer.hpp"
#include "logvec/write/options.hpp"

namespace logvec {

// Where a WAL consumer starts. Entries at or after `resume_offset` are
// applied in full. Between `replay_from` and `resume_offset` only inserts
// into `growing` segments are applied: those rows were buffered but not yet
// persisted when the starting state was captured. Earlier deletes arrive
// through `deletes`.
struct ChannelBootstrap {
  std::uint64_t replay_from = 0;
  std::uint64_t resume_offset = 0;
  std::set<SegmentId> growing;
  DeleteLog deletes;
  HlcTimestamp last_tick;
};

// State of one consumed channel as captured for a checkpoint.
struct ChannelState {
  CollectionId collection = 0;
  ShardId shard = 0;
  std::string channel;
  SubscriberPosition position;
  std::vector<SegmentDescriptor> growing;
  std::map<SegmentId, std::uint64_t> growing_first_offset;
  const DeleteLog* deletes = nullptr;
  // Sealed buffers still waiting for their binlogs.
  std::size_t pending_seals = 0;
};

// WAL subscriber that buffers growing segments, seals them when the logger
// says so, and writes sealed segments as per-field binlogs.
class DataNode {
 public:
  DataNode(NodeId id, LogBroker& broker, Tso& tso, ObjectStore& store, MetaStore& meta,
           WriteOptions options);
  ~DataNode();

  NodeId id() const { return id_; }

  void watch(const CollectionInfo& info, ShardId shard, ChannelBootstrap boot = {});
  void unwatch(CollectionId collection, ShardId shard);
  void unwatch_collection(CollectionId collection);
  std::vector<std::pair<CollectionId, ShardId>> watched() const;
  bool watches(CollectionId collection, ShardId shard) const;

  // Applies up to `budget` available entries across watched channels.
  std::size_t pump(std::size_t budget = SIZE_MAX);
  bool caught_up() const;

  // Concatenates the live rows of sealed inputs into one new sealed segment.
  SegmentDescriptor merge_segments(const std::vector<SegmentDescriptor>& inputs);

  ChannelState channel_state(CollectionId collection, ShardId shard) const;
  const GrowingSegmentBuffer* growing(CollectionId collection, SegmentId segment) const;
  std::uint64_t sealed_count() const { return sealed_count_; }
  std::uint64_t entries_applied() const { return entries_applied_; }

 private:
  struct Channel;
  Channel& channel(CollectionId collection, ShardId shard) const;
  void apply(Channel& ch, std::uint64_t offset, const LogEntry& e);
  void seal(Channel& ch, SegmentId segment, HlcTimestamp at, SealTrigger trigger);
  bool flush_pending(Channel& ch);

  NodeId id_;
  LogBroker& broker_;
  Tso& tso_;
  ObjectStore& store_;
  MetaStore& meta_;
  WriteOptions options_;
  mutable std::mutex mu_;
  std::map<std::pair<CollectionId, ShardId>, std::unique_ptr<Channel>> channels_;
  std::uint64_t sealed_count_ = 0;
  std::uint64_t entries_applied_ = 0;
};

}  // namespace logvec
