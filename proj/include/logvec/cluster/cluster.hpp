#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "logvec/coord/data_coord.hpp"
#include "logvec/coord/index_coord.hpp"
#include "logvec/coord/query_coord.hpp"
#include "logvec/coord/root_coord.hpp"
#include "logvec/log/time_tick.hpp"
#include "logvec/read/proxy.hpp"
#include "logvec/read/query_node.hpp"
#include "logvec/ssd/bucket_index.hpp"
#include "logvec/timetravel/checkpoint.hpp"
#include "logvec/write/data_node.hpp"
#include "logvec/write/hash_ring.hpp"
#include "logvec/write/logger.hpp"

namespace logvec {

// Every tunable of a deployment. Loaded from a JSON config file; unknown
// keys are rejected so a typo cannot silently fall back to a default.
struct ClusterConfig {
  WriteOptions write;
  std::uint64_t tick_interval_ms = 100;
  std::uint64_t default_tau_ms = kEventual;
  IndexParams index;  // default for collections created without one
  double rebuild_threshold = 0.2;
  bool temp_indexes = true;
  QueryCoordOptions query_coord;
  bool autoscale = false;
  IndexCoordOptions index_coord;
  std::uint32_t bucket_cap = kBucketCap;
  std::uint64_t checkpoint_entries = 1000;
  std::uint64_t checkpoint_interval_ms = 10'000;
  std::uint32_t loggers = 1;
  std::uint32_t data_nodes = 1;
  std::uint32_t query_nodes = 1;
  std::uint64_t search_timeout_ms = 1000;
  bool merge = true;

  void check() const;
  nlohmann::json to_json() const;
  static ClusterConfig from_json(const nlohmann::json& j);
  static ClusterConfig load(const std::filesystem::path& file);
};

struct CollectionStats {
  std::string name;
  CollectionId id = 0;
  std::uint64_t sealed_segments = 0;
  std::uint64_t sealed_rows = 0;
  std::uint64_t growing_segments = 0;
  std::uint64_t growing_rows = 0;
  std::uint64_t deletes = 0;
  std::uint64_t live_rows = 0;  // entities visible now
  std::uint64_t index_tasks_done = 0;
  std::uint64_t checkpoints = 0;
  nlohmann::json to_json() const;
};

// One process holding the whole deployment: log broker, stores, the four
// coordinators and every worker node, driven by a virtual clock. Nothing
// runs on its own; step() and advance() move the system forward, which makes
// every run a pure function of its inputs. Opening a root that already holds
// state recovers it: metadata and the log survive, query nodes start empty
// and get their work reassigned.
class Cluster {
 public:
  explicit Cluster(std::filesystem::path root, ClusterConfig config = {});
  ~Cluster();
  Cluster(const Cluster&) = delete;
  Cluster& operator=(const Cluster&) = delete;

  const ClusterConfig& config() const { return config_; }
  const std::filesystem::path& root() const { return root_; }
  std::uint64_t now_ms() const { return clock_.now_ms(); }

  CollectionInfo create_collection(CollectionInfo proto);
  void drop_collection(const std::string& name);
  std::vector<CollectionInfo> collections() const;
  CollectionInfo collection(const std::string& name) const;

  // Auto primary keys are drawn from the TSO when the entity has none.
  InsertAck insert(const std::string& collection, Entity entity);
  DeleteAck remove(const std::string& collection, const PrimaryKey& pk);
  // Seals every open segment of the collection.
  std::vector<SegmentId> seal(const std::string& collection);

  // Routes through the proxy; requests with travel_ts are answered from a
  // restored snapshot instead. Guard waits advance the clock tick by tick.
  SearchResult search(SearchRequest request, Proxy::NodeCosts* costs = nullptr);
  std::vector<SearchResult> search_batch(std::vector<SearchRequest> requests, Proxy::NodeCosts* costs = nullptr);

  // Processes everything available at the current time.
  void step();
  void advance(std::uint64_t delta_ms);
  void advance_to(std::uint64_t t_ms);
  // When the next time-tick round is emitted.
  std::uint64_t next_tick_ms() const;
  // Advances until no load, release or index build is outstanding, or
  // `limit_ms` passes. Returns true when settled.
  bool settle(std::uint64_t limit_ms = 60'000);

  NodeId add_query_node();
  // Stops a node without notice; the coordinator learns of it from missing
  // heartbeats.
  void kill_query_node(NodeId node);
  // Drains a node's work onto the others, then shuts it down.
  void remove_query_node(NodeId node);
  std::vector<NodeId> query_nodes() const;  // running nodes
  QueryNode& query_node(NodeId node);
  // Node count the autoscaler wants for the given windowed mean latency;
  // applies it (adding or draining nodes) when autoscaling is on.
  std::uint32_t autoscale(double mean_latency_ms);
  std::vector<SegmentMove> rebalance();
  std::size_t rebuild_deleted();

  std::string checkpoint(const std::string& collection);
  Snapshot restore(const std::string& collection, HlcTimestamp at) const;
  GcReport gc(const std::string& collection, std::uint64_t expiration_ms);
  CollectionStats stats(const std::string& collection) const;

  LogBroker& broker() { return *broker_; }
  ObjectStore& store() { return *store_; }
  MetaStore& meta() { return *meta_; }
  Tso& tso() { return tso_; }
  VirtualClock& clock() { return clock_; }
  RootCoord& root_coord() { return *root_coord_; }
  DataCoord& data_coord() { return *data_coord_; }
  IndexCoord& index_coord() { return *index_coord_; }
  QueryCoord& query_coord() { return *query_coord_; }
  Proxy& proxy() { return *proxy_; }

 private:
  struct Collection {
    std::uint64_t last_checkpoint_ms = 0;
    std::uint64_t entries_at_checkpoint = 0;
  };
  void open_collection(const CollectionInfo& info, bool fresh);
  void serve_on(QueryNode& node, const CollectionInfo& info);
  Logger& logger_for(CollectionId collection, ShardId shard);
  DataNode& data_node_for(CollectionId collection, ShardId shard);
  std::size_t pump_all();
  void maybe_checkpoint();
  void merge_small_segments();
  std::uint64_t wait_one_tick();
  Proxy::NodeResolver resolver();
  std::string checkpoint_locked(const CollectionInfo& info);

  std::filesystem::path root_;
  ClusterConfig config_;
  VirtualClock clock_;
  Tso tso_{clock_};
  std::unique_ptr<LogBroker> broker_;
  std::unique_ptr<ObjectStore> store_;
  std::unique_ptr<MetaStore> meta_;
  std::unique_ptr<RootCoord> root_coord_;
  std::unique_ptr<DataCoord> data_coord_;
  std::unique_ptr<IndexCoord> index_coord_;
  std::unique_ptr<QueryCoord> query_coord_;
  std::unique_ptr<Proxy> proxy_;
  TimeTickEmitter ticks_;
  HashRing ring_;
  std::map<LoggerId, std::unique_ptr<Logger>> loggers_;
  std::vector<std::unique_ptr<DataNode>> data_nodes_;
  std::map<NodeId, std::unique_ptr<QueryNode>> query_nodes_;
  std::set<NodeId> down_;  // killed nodes, kept so in-flight pointers stay valid
  std::set<NodeId> draining_;
  std::map<CollectionId, Collection> collections_;
  std::uint64_t last_heartbeat_ms_ = 0;
};

}  // namespace logvec
