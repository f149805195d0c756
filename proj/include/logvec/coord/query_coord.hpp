#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "logvec/coord/inbox.hpp"
#include "logvec/coord/root_coord.hpp"

namespace logvec {

struct QueryCoordOptions {
  std::uint64_t heartbeat_ms = 500;
  std::uint32_t missed_heartbeats = 3;
  // Rebalance target for max/min hosted rows across healthy nodes.
  double balance_ratio = 1.5;
  int max_load_attempts = 3;
  // Autoscaling: halve below the low mark, double above the high mark.
  double scale_low_ms = 100;
  double scale_high_ms = 150;
  std::uint32_t min_nodes = 1;
  std::uint32_t max_nodes = 16;
};

struct SegmentMove {
  CollectionId collection = 0;
  SegmentId segment = 0;
  NodeId from = 0;
  NodeId to = 0;
};

// Decides which query node hosts which sealed segment and which node serves
// each WAL channel's growing data. Every decision goes out as a command on
// the coord channel; the distribution only changes when a node confirms.
// Loads always precede the matching releases, so a segment never drops out
// of the served set while it is being moved.
class QueryCoord {
 public:
  QueryCoord(LogBroker& broker, Tso& tso, MetaStore& meta, const RootCoord& root, QueryCoordOptions options = {});

  // Assigns channels of existing collections and every known segment. Call
  // once the first nodes are registered.
  void start(std::uint64_t now_ms);
  std::size_t pump(std::uint64_t now_ms);
  bool caught_up() const { return coord_.caught_up() && ddl_.caught_up(); }

  void add_node(NodeId node, std::uint64_t now_ms);
  void heartbeat(NodeId node, std::uint64_t now_ms);
  // Declares nodes dead after the configured number of missed heartbeats
  // and moves their work. Returns the nodes declared dead.
  std::vector<NodeId> check_health(std::uint64_t now_ms);
  // Moves a node's work elsewhere; drained() turns true once it holds nothing.
  void drain(NodeId node);
  bool drained(NodeId node) const;
  void forget_node(NodeId node);

  std::vector<SegmentMove> rebalance();
  // Node count the latency calls for.
  std::uint32_t autoscale_target(double mean_latency_ms, std::uint32_t current) const;

  std::vector<NodeId> healthy_nodes() const;
  bool alive(NodeId node) const;
  std::map<NodeId, std::uint64_t> hosted_rows() const;
  std::set<NodeId> hosts(CollectionId collection, SegmentId segment) const;
  std::optional<NodeId> channel_owner(CollectionId collection, ShardId shard) const;
  // Live segments lacking a healthy host or pending load. Empty while the
  // cluster has no healthy node at all, which is declared unavailability.
  std::vector<std::string> coverage_violations() const;
  bool unavailable() const { return healthy_nodes().empty(); }
  // Segments with a load in flight or a release not yet issued.
  bool settled() const;
  std::uint64_t failed_loads() const { return failed_loads_; }

 private:
  struct NodeState {
    bool alive = true;
    bool draining = false;
    std::uint64_t last_heartbeat = 0;
  };
  struct Entry {
    SegmentDescriptor desc;
    std::set<NodeId> hosts;
    std::map<NodeId, int> pending;  // node -> attempt number
    // Hosts to release once a load lands on the key node.
    std::map<NodeId, std::set<NodeId>> release_after;
    // Segments this one replaces; released once it is hosted.
    std::vector<SegmentId> replaces;
  };
  using Key = std::pair<CollectionId, SegmentId>;

  void apply_coord(const LogEntry& e);
  void apply_ddl(const LogEntry& e);
  void track(const SegmentDescriptor& desc, std::vector<SegmentId> replaces = {});
  void forget_segment(const Key& key);
  std::optional<NodeId> pick_node(const std::set<NodeId>& exclude, const std::map<NodeId, std::uint64_t>& load) const;
  void request_load(const Key& key, NodeId node, int attempt);
  void ensure_hosted(const Key& key);
  void assign_channels(const CollectionInfo& info);
  void evacuate(NodeId node);
  void finish_evacuations();
  void publish(CoordMessage m);
  std::map<NodeId, std::uint64_t> load_map() const;

  LogBroker& broker_;
  Tso& tso_;
  MetaStore& meta_;
  const RootCoord& root_;
  QueryCoordOptions options_;
  Inbox coord_;
  Inbox ddl_;
  std::map<NodeId, NodeState> nodes_;
  std::map<Key, Entry> segments_;
  std::map<std::pair<CollectionId, ShardId>, NodeId> channels_;
  // Node being emptied -> segments and channels it still has to hand over.
  std::map<NodeId, std::pair<std::set<Key>, std::set<std::pair<CollectionId, ShardId>>>> evacuating_;
  std::uint64_t failed_loads_ = 0;
};

}  // namespace logvec
