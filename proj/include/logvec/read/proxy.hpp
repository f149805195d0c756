#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "logvec/core/collection.hpp"
#include "logvec/log/broker.hpp"
#include "logvec/read/query_node.hpp"
#include "logvec/read/search.hpp"

namespace logvec {

struct DispatchPlan {
  CollectionId collection = 0;
  Metric metric = Metric::kEuclidean;
  std::vector<NodeId> nodes;
};

// Requests sharing a collection and metric, dispatched together.
struct Batch {
  CollectionId collection = 0;
  Metric metric = Metric::kEuclidean;
  std::vector<std::size_t> members;  // indexes into the pending list
};

// Entry point of searches. Keeps a cached copy of collection metadata and of
// which query nodes serve which collection, refreshed from the ddl and coord
// channels.
class Proxy {
 public:
  Proxy(LogBroker& broker, Tso& tso);
  ~Proxy();

  void follow(std::uint64_t ddl_from = 0, std::uint64_t coord_from = 0);
  std::size_t pump();

  void cache_collection(const CollectionInfo& info);
  void forget_collection(CollectionId id);
  std::optional<CollectionInfo> find(const std::string& name) const;
  std::set<NodeId> nodes_for(CollectionId collection) const;
  // Direct distribution updates, mirroring what the coord channel carries.
  void note_segment(CollectionId collection, NodeId node, SegmentId segment, bool hosted);
  void note_channel(CollectionId collection, NodeId node, ShardId shard, bool assigned);
  void forget_node(NodeId node);

  // Rejects unknown collections, malformed filters and bad vectors, then
  // stamps the issue time and names every node that must answer.
  DispatchPlan verify_and_route(SearchRequest& request) const;

  // Groups verified requests by (collection, metric), in arrival order of
  // each group's first member.
  static std::vector<Batch> batch_requests(const std::vector<SearchRequest>& pending);

  // Resolves a node id to a reachable node, or nullptr when it cannot be
  // reached.
  using NodeResolver = std::function<const QueryNode*(NodeId)>;
  // Lets time pass until at least one more time tick has been consumed.
  // Returns the milliseconds that elapsed.
  using TickWaiter = std::function<std::uint64_t()>;
  // Scan work done per answering node.
  using NodeCosts = std::map<NodeId, kernels::ScanStats>;

  // Verifies, waits out the consistency guard on every node, searches and
  // reduces. An unreachable node or a guard wait beyond `timeout_ms` is a
  // kTimeout error.
  SearchResult search(SearchRequest request, const NodeResolver& resolve, const TickWaiter& wait,
                      std::uint64_t timeout_ms, NodeCosts* stats = nullptr) const;

  // Executes one batch: requests with identical search parameters share
  // one dispatch round. Results are per member, in member order.
  std::vector<SearchResult> search_batch(std::vector<SearchRequest> members, const NodeResolver& resolve,
                                         const TickWaiter& wait, std::uint64_t timeout_ms,
                                         NodeCosts* stats = nullptr) const;

  std::uint64_t dispatches() const { return dispatches_; }

 private:
  struct Serving {
    std::set<SegmentId> segments;
    std::set<ShardId> channels;
  };
  void apply(const LogEntry& e);
  SearchResult run(const SearchRequest& request, const DispatchPlan& plan, const NodeResolver& resolve,
                   const TickWaiter& wait, std::uint64_t timeout_ms, NodeCosts* stats) const;

  LogBroker& broker_;
  Tso& tso_;
  mutable std::mutex mu_;
  std::map<CollectionId, CollectionInfo> collections_;
  std::map<std::string, CollectionId> by_name_;
  std::map<CollectionId, std::map<NodeId, Serving>> distribution_;
  std::unique_ptr<Subscription> ddl_;
  std::unique_ptr<Subscription> coord_;
  mutable std::uint64_t dispatches_ = 0;
};

}  // namespace logvec
