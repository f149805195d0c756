#include "logvec/read/proxy.hpp"

#include <algorithm>
#include <tuple>

#include "logvec/core/error.hpp"
#include "logvec/read/filter.hpp"

namespace logvec {

Proxy::Proxy(LogBroker& broker, Tso& tso) : broker_(broker), tso_(tso) {}

Proxy::~Proxy() = default;

void Proxy::follow(std::uint64_t ddl_from, std::uint64_t coord_from) {
  std::lock_guard lock(mu_);
  broker_.create_channel(kDdlChannel);
  broker_.create_channel(kCoordChannel);
  ddl_ = std::make_unique<Subscription>(broker_, kDdlChannel, std::max(ddl_from, broker_.base_offset(kDdlChannel)));
  coord_ = std::make_unique<Subscription>(broker_, kCoordChannel,
                                          std::max(coord_from, broker_.base_offset(kCoordChannel)));
}

std::size_t Proxy::pump() {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (auto* sub : {ddl_.get(), coord_.get()}) {
    if (!sub) continue;
    while (auto e = sub->poll()) {
      apply(*e);
      ++n;
    }
  }
  return n;
}

void Proxy::apply(const LogEntry& e) {
  if (e.kind == EntryKind::kDdl) {
    const auto& d = e.as_ddl();
    if (d.op == DdlOp::kCreateCollection) {
      auto info = CollectionInfo::from_json(nlohmann::json::parse(d.body));
      by_name_[info.name] = info.id;
      collections_[info.id] = std::move(info);
    } else {
      by_name_.erase(d.name);
      collections_.erase(d.collection);
      distribution_.erase(d.collection);
    }
    return;
  }
  if (e.kind != EntryKind::kCoord) return;
  const auto& m = e.as_coord();
  switch (m.type) {
    case CoordType::kSegmentLoaded:
      if (m.flag == 0) distribution_[m.collection][m.node].segments.insert(m.segment);
      break;
    case CoordType::kReleaseSegment:
      if (auto it = distribution_.find(m.collection); it != distribution_.end()) {
        if (auto n = it->second.find(m.node); n != it->second.end()) {
          n->second.segments.erase(m.segment);
          if (n->second.segments.empty() && n->second.channels.empty()) it->second.erase(n);
        }
      }
      break;
    case CoordType::kWatchChannel:
      if (m.flag) {
        distribution_[m.collection][m.node].channels.insert(m.shard);
      } else if (auto it = distribution_.find(m.collection); it != distribution_.end()) {
        if (auto n = it->second.find(m.node); n != it->second.end()) {
          n->second.channels.erase(m.shard);
          if (n->second.segments.empty() && n->second.channels.empty()) it->second.erase(n);
        }
      }
      break;
    case CoordType::kCollectionDropped:
      if (auto it = collections_.find(m.collection); it != collections_.end()) {
        by_name_.erase(it->second.name);
        collections_.erase(it);
      }
      distribution_.erase(m.collection);
      break;
    default:
      break;
  }
}

void Proxy::cache_collection(const CollectionInfo& info) {
  std::lock_guard lock(mu_);
  by_name_[info.name] = info.id;
  collections_[info.id] = info;
}

void Proxy::forget_collection(CollectionId id) {
  std::lock_guard lock(mu_);
  if (auto it = collections_.find(id); it != collections_.end()) {
    by_name_.erase(it->second.name);
    collections_.erase(it);
  }
  distribution_.erase(id);
}

std::optional<CollectionInfo> Proxy::find(const std::string& name) const {
  std::lock_guard lock(mu_);
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return collections_.at(it->second);
}

std::set<NodeId> Proxy::nodes_for(CollectionId collection) const {
  std::lock_guard lock(mu_);
  std::set<NodeId> out;
  if (auto it = distribution_.find(collection); it != distribution_.end()) {
    for (const auto& [node, _] : it->second) out.insert(node);
  }
  return out;
}

void Proxy::note_segment(CollectionId collection, NodeId node, SegmentId segment, bool hosted) {
  CoordMessage m;
  m.type = hosted ? CoordType::kSegmentLoaded : CoordType::kReleaseSegment;
  m.collection = collection;
  m.node = node;
  m.segment = segment;
  std::lock_guard lock(mu_);
  apply(LogEntry::coord({}, m));
}

void Proxy::note_channel(CollectionId collection, NodeId node, ShardId shard, bool assigned) {
  CoordMessage m;
  m.type = CoordType::kWatchChannel;
  m.collection = collection;
  m.node = node;
  m.shard = shard;
  m.flag = assigned ? 1 : 0;
  std::lock_guard lock(mu_);
  apply(LogEntry::coord({}, m));
}

void Proxy::forget_node(NodeId node) {
  std::lock_guard lock(mu_);
  for (auto& [_, nodes] : distribution_) nodes.erase(node);
}

DispatchPlan Proxy::verify_and_route(SearchRequest& request) const {
  std::lock_guard lock(mu_);
  auto it = by_name_.find(request.collection);
  if (it == by_name_.end()) {
    throw Error(ErrorCode::kNotFound, "collection '" + request.collection + "' does not exist");
  }
  const auto& info = collections_.at(it->second);
  if (request.k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (request.queries.empty()) throw Error(ErrorCode::kInvalidArgument, "search carries no query vector");
  std::size_t field = 0;
  if (!request.vector_field.empty()) {
    auto f = info.schema.find_vector_field(request.vector_field);
    if (!f) throw Error(ErrorCode::kInvalidArgument, "unknown vector field '" + request.vector_field + "'");
    field = *f;
  }
  const auto dim = info.schema.vector_fields[field].dim;
  for (const auto& q : request.queries) {
    if (q.size() != dim) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "query has dimension " + std::to_string(q.size()) + ", expected " + std::to_string(dim));
    }
  }
  if (request.filter) FilterExpr::parse(*request.filter).check(info.schema);
  if (request.travel_ts) {
    throw Error(ErrorCode::kInvalidArgument, "time-travel searches run against a restored snapshot");
  }
  request.collection_id = info.id;
  if (!request.metric) request.metric = info.metric;
  if (request.issue_ts == HlcTimestamp{}) request.issue_ts = tso_.allocate();

  DispatchPlan plan;
  plan.collection = info.id;
  plan.metric = *request.metric;
  if (auto d = distribution_.find(info.id); d != distribution_.end()) {
    for (const auto& [node, _] : d->second) plan.nodes.push_back(node);
  }
  return plan;
}

std::vector<Batch> Proxy::batch_requests(const std::vector<SearchRequest>& pending) {
  std::vector<Batch> out;
  std::map<std::pair<std::string, int>, std::size_t> slot;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    const auto& r = pending[i];
    const int metric = r.metric ? static_cast<int>(*r.metric) : -1;
    auto [it, fresh] = slot.try_emplace({r.collection, metric}, out.size());
    if (fresh) {
      Batch b;
      b.collection = r.collection_id;
      b.metric = r.metric.value_or(Metric::kEuclidean);
      out.push_back(std::move(b));
    }
    out[it->second].members.push_back(i);
  }
  return out;
}

SearchResult Proxy::run(const SearchRequest& request, const DispatchPlan& plan, const NodeResolver& resolve,
                        const TickWaiter& wait, std::uint64_t timeout_ms, NodeCosts* stats) const {
  if (plan.nodes.empty()) {
    throw Error(ErrorCode::kUnavailable, "no query node serves collection '" + request.collection + "'");
  }
  std::uint64_t waited = 0;
  std::vector<const QueryNode*> nodes;
  for (NodeId id : plan.nodes) {
    const QueryNode* node = resolve(id);
    if (!node) {
      throw Error(ErrorCode::kTimeout, "query node " + std::to_string(id) + " did not answer; result would be partial");
    }
    nodes.push_back(node);
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (;;) {
      GuardDecision d;
      try {
        d = nodes[i]->guard(request);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNotFound) throw;
        throw Error(ErrorCode::kUnavailable, "stale distribution: " + std::string(e.what()));
      }
      if (d == GuardDecision::kProceed) break;
      if (waited >= timeout_ms) {
        throw Error(ErrorCode::kTimeout, "query node " + std::to_string(plan.nodes[i]) +
                                             " stayed behind the staleness bound for " + std::to_string(waited) + " ms");
      }
      waited += wait();
      if (!resolve(plan.nodes[i])) {
        throw Error(ErrorCode::kTimeout,
                    "query node " + std::to_string(plan.nodes[i]) + " did not answer; result would be partial");
      }
    }
  }
  std::vector<std::optional<PartialResult>> partials;
  for (const auto* node : nodes) {
    partials.emplace_back(node->search_local(request, stats ? &(*stats)[node->id()] : nullptr));
    ++dispatches_;
  }
  auto result = reduce_global(plan.metric, partials, request.queries.size(), request.k);
  result.waited_ms = waited;
  return result;
}

SearchResult Proxy::search(SearchRequest request, const NodeResolver& resolve, const TickWaiter& wait,
                           std::uint64_t timeout_ms, NodeCosts* stats) const {
  const auto plan = verify_and_route(request);
  return run(request, plan, resolve, wait, timeout_ms, stats);
}

std::vector<SearchResult> Proxy::search_batch(std::vector<SearchRequest> members, const NodeResolver& resolve,
                                              const TickWaiter& wait, std::uint64_t timeout_ms,
                                              NodeCosts* stats) const {
  std::vector<DispatchPlan> plans;
  for (auto& r : members) plans.push_back(verify_and_route(r));
  for (std::size_t i = 1; i < members.size(); ++i) {
    if (plans[i].collection != plans[0].collection || plans[i].metric != plans[0].metric) {
      throw Error(ErrorCode::kInvalidArgument, "batch mixes collections or metrics");
    }
  }
  // Members with the same parameters become one multi-query request.
  auto params_of = [](const SearchRequest& r) {
    const auto knobs = r.knobs.value_or(SearchKnobs{0, 0});
    return std::make_tuple(r.k, r.filter.value_or(std::string("\x01")), r.vector_field, knobs.nprobe,
                           knobs.ef_search);
  };
  std::vector<SearchResult> out(members.size());
  std::vector<bool> done(members.size(), false);
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (done[i]) continue;
    SearchRequest merged = members[i];
    std::vector<std::pair<std::size_t, std::size_t>> owners;  // (member, query count)
    owners.emplace_back(i, members[i].queries.size());
    for (std::size_t j = i + 1; j < members.size(); ++j) {
      if (done[j] || params_of(members[j]) != params_of(members[i])) continue;
      done[j] = true;
      merged.queries.insert(merged.queries.end(), members[j].queries.begin(), members[j].queries.end());
      merged.tau_ms = std::min(merged.tau_ms, members[j].tau_ms);
      merged.issue_ts = std::max(merged.issue_ts, members[j].issue_ts);
      owners.emplace_back(j, members[j].queries.size());
    }
    auto res = run(merged, plans[i], resolve, wait, timeout_ms, stats);
    std::size_t q = 0;
    for (const auto& [member, count] : owners) {
      out[member].waited_ms = res.waited_ms;
      for (std::size_t c = 0; c < count; ++c) out[member].hits.push_back(std::move(res.hits[q++]));
    }
  }
  return out;
}

}  // namespace logvec
