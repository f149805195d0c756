#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "logvec/core/collection.hpp"
#include "logvec/log/broker.hpp"
#include "logvec/read/search.hpp"
#include "logvec/storage/object_store.hpp"
#include "logvec/write/data_node.hpp"
#include "logvec/write/growing_buffer.hpp"

namespace logvec {

struct QueryNodeOptions {
  std::uint32_t slice_rows = kDefaultSliceRows;
  bool temp_indexes = true;
  double rebuild_threshold = 0.2;
};

// Serves searches over the segments it hosts plus the growing data of the
// WAL channels assigned to it. Every served collection's WAL channels are
// consumed in full, so a channel can be reassigned without a cold start.
class QueryNode {
 public:
  QueryNode(NodeId id, LogBroker& broker, Tso& tso, ObjectStore& store, QueryNodeOptions options = {});
  ~QueryNode();

  NodeId id() const { return id_; }

  // Starts consuming the collection's WAL channels. Shards without a
  // bootstrap start at the channel's first retained entry. Inserts into
  // `retired` segments are skipped: they are served sealed elsewhere.
  void serve(const CollectionInfo& info, const std::map<ShardId, ChannelBootstrap>& boots = {},
             const std::set<SegmentId>& retired = {});
  void drop(CollectionId collection);
  bool serves(CollectionId collection) const;
  std::vector<CollectionId> served() const;

  // Follows the coord channel from `from_offset` and applies commands
  // addressed to this node.
  void follow_coord(std::uint64_t from_offset);

  void assign_channel(CollectionId collection, ShardId shard, bool assigned);
  std::set<ShardId> assigned_channels(CollectionId collection) const;

  // Fetches binlogs and any built indexes. Throws kNotFound when an object
  // is missing; the segment then stays unloaded.
  void load_segment(const SegmentDescriptor& desc);
  // Hosts in-memory columns directly, with an optional index per vector field.
  void host_segment(const SegmentDescriptor& desc, SegmentColumns columns,
                    std::vector<std::unique_ptr<VectorIndex>> indexes = {});
  void release_segment(CollectionId collection, SegmentId segment);
  // Stops serving the growing copy of a segment now hosted sealed somewhere.
  void retire_growing(CollectionId collection, SegmentId segment);
  std::vector<SegmentId> hosted(CollectionId collection) const;
  std::vector<SegmentId> growing_segments(CollectionId collection) const;
  std::uint64_t hosted_rows() const;

  void apply_segment_command(const CoordMessage& m);

  // Consumes up to `budget` entries across the coord and WAL channels.
  std::size_t pump(std::size_t budget = SIZE_MAX);
  bool caught_up() const;

  // Oldest time tick consumed across the collection's channels.
  HlcTimestamp serviceable_ts(CollectionId collection) const;
  GuardDecision guard(const SearchRequest& request) const;

  // Node-wise top-k over hosted sealed segments and assigned growing data.
  PartialResult search_local(const SearchRequest& request, kernels::ScanStats* stats = nullptr) const;

  // Compacts hosted segments whose deleted fraction reached the threshold,
  // rebuilding their indexes over the live rows.
  std::size_t rebuild_deleted();
  std::uint64_t rebuild_count() const { return rebuilds_; }

  std::uint64_t deleted_rows(CollectionId collection, SegmentId segment) const;

 private:
  struct Collection;
  struct Sealed;
  struct Growing;
  Collection& collection(CollectionId id) const;
  void apply(Collection& c, ShardId shard, std::uint64_t offset, const LogEntry& e);
  void apply_coord(const CoordMessage& m);
  void load_locked(Collection& c, const SegmentDescriptor& desc);
  void host_locked(Collection& c, const SegmentDescriptor& desc, SegmentColumns columns,
                   std::vector<std::unique_ptr<VectorIndex>> indexes);
  void publish_loaded(const SegmentDescriptor& desc, bool ok, const std::string& detail);

  NodeId id_;
  LogBroker& broker_;
  Tso& tso_;
  ObjectStore& store_;
  QueryNodeOptions options_;
  mutable std::shared_mutex mu_;
  std::map<CollectionId, std::unique_ptr<Collection>> collections_;
  std::unique_ptr<Subscription> coord_;
  std::uint64_t rebuilds_ = 0;
};

}  // namespace logvec
