#include "logvec/cluster/cluster.hpp"

#include <algorithm>
#include <fstream>

#include "logvec/core/error.hpp"

namespace logvec {

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
      throw Error(ErrorCode::kConfig, "unknown config key '" + where + key + "'");
    }
  }
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::kConfig, std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace

void ClusterConfig::check() const {
  write.check();
  index.check();
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, msg); };
  if (tick_interval_ms == 0) fail("tick_interval_ms must be positive");
  if (rebuild_threshold <= 0 || rebuild_threshold > 1) fail("rebuild_threshold must be in (0, 1]");
  if (query_coord.heartbeat_ms == 0 || query_coord.missed_heartbeats == 0) fail("heartbeats must be positive");
  if (query_coord.balance_ratio < 1) fail("balance_ratio must be at least 1");
  if (query_coord.scale_low_ms >= query_coord.scale_high_ms) fail("autoscale low mark must be below the high mark");
  if (query_coord.min_nodes == 0 || query_coord.min_nodes > query_coord.max_nodes) fail("bad autoscale node range");
  if (bucket_cap == 0 || bucket_cap % 4096 != 0) fail("bucket_cap must be a positive multiple of 4096");
  if (checkpoint_entries == 0 || checkpoint_interval_ms == 0) fail("checkpoint cadence must be positive");
  if (loggers == 0 || data_nodes == 0) fail("at least one logger and one data node are needed");
  if (index_coord.evals_per_ms <= 0 || index_coord.max_attempts < 1) fail("bad index node settings");
}

nlohmann::json ClusterConfig::to_json() const {
  nlohmann::json j;
  j["write"] = write.to_json();
  j["tick_interval_ms"] = tick_interval_ms;
  if (default_tau_ms == kEventual) {
    j["default_tau_ms"] = "eventual";
  } else {
    j["default_tau_ms"] = default_tau_ms;
  }
  j["index"] = index.to_json();
  j["rebuild_threshold"] = rebuild_threshold;
  j["temp_indexes"] = temp_indexes;
  j["autoscale"] = {{"enabled", autoscale},
                    {"low_ms", query_coord.scale_low_ms},
                    {"high_ms", query_coord.scale_high_ms},
                    {"min_nodes", query_coord.min_nodes},
                    {"max_nodes", query_coord.max_nodes}};
  j["query_coord"] = {{"heartbeat_ms", query_coord.heartbeat_ms},
                      {"missed_heartbeats", query_coord.missed_heartbeats},
                      {"balance_ratio", query_coord.balance_ratio},
                      {"max_load_attempts", query_coord.max_load_attempts}};
  j["index_nodes"] = {{"max_attempts", index_coord.max_attempts},
                      {"idle_shutdown_ms", index_coord.idle_shutdown_ms},
                      {"evals_per_ms", index_coord.evals_per_ms}};
  j["bucket_cap"] = bucket_cap;
  j["checkpoint"] = {{"entries", checkpoint_entries}, {"interval_ms", checkpoint_interval_ms}};
  j["nodes"] = {{"loggers", loggers}, {"data", data_nodes}, {"query", query_nodes}};
  j["search_timeout_ms"] = search_timeout_ms;
  j["merge"] = merge;
  return j;
}

ClusterConfig ClusterConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "config must be a JSON object");
  reject_unknown(j,
                 {"write", "tick_interval_ms", "default_tau_ms", "index", "rebuild_threshold", "temp_indexes",
                  "autoscale", "query_coord", "index_nodes", "bucket_cap", "checkpoint", "nodes",
                  "search_timeout_ms", "merge"},
                 "");
  ClusterConfig c;
  try {
    if (j.contains("write")) c.write = WriteOptions::from_json(j.at("write"));
    if (j.contains("index")) c.index = IndexParams::from_json(j.at("index"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  read_key(j, "tick_interval_ms", c.tick_interval_ms);
  if (j.contains("default_tau_ms")) {
    const auto& t = j.at("default_tau_ms");
    if (t.is_string() && (t == "eventual" || t == "inf")) {
      c.default_tau_ms = kEventual;
    } else {
      read_key(j, "default_tau_ms", c.default_tau_ms);
    }
  }
  read_key(j, "rebuild_threshold", c.rebuild_threshold);
  read_key(j, "temp_indexes", c.temp_indexes);
  if (j.contains("autoscale")) {
    const auto& a = j.at("autoscale");
    reject_unknown(a, {"enabled", "low_ms", "high_ms", "min_nodes", "max_nodes"}, "autoscale.");
    read_key(a, "enabled", c.autoscale);
    read_key(a, "low_ms", c.query_coord.scale_low_ms);
    read_key(a, "high_ms", c.query_coord.scale_high_ms);
    read_key(a, "min_nodes", c.query_coord.min_nodes);
    read_key(a, "max_nodes", c.query_coord.max_nodes);
  }
  if (j.contains("query_coord")) {
    const auto& q = j.at("query_coord");
    reject_unknown(q, {"heartbeat_ms", "missed_heartbeats", "balance_ratio", "max_load_attempts"}, "query_coord.");
    read_key(q, "heartbeat_ms", c.query_coord.heartbeat_ms);
    read_key(q, "missed_heartbeats", c.query_coord.missed_heartbeats);
    read_key(q, "balance_ratio", c.query_coord.balance_ratio);
    read_key(q, "max_load_attempts", c.query_coord.max_load_attempts);
  }
  if (j.contains("index_nodes")) {
    const auto& n = j.at("index_nodes");
    reject_unknown(n, {"max_attempts", "idle_shutdown_ms", "evals_per_ms"}, "index_nodes.");
    read_key(n, "max_attempts", c.index_coord.max_attempts);
    read_key(n, "idle_shutdown_ms", c.index_coord.idle_shutdown_ms);
    read_key(n, "evals_per_ms", c.index_coord.evals_per_ms);
  }
  read_key(j, "bucket_cap", c.bucket_cap);
  if (j.contains("checkpoint")) {
    const auto& cp = j.at("checkpoint");
    reject_unknown(cp, {"entries", "interval_ms"}, "checkpoint.");
    read_key(cp, "entries", c.checkpoint_entries);
    read_key(cp, "interval_ms", c.checkpoint_interval_ms);
  }
  if (j.contains("nodes")) {
    const auto& n = j.at("nodes");
    reject_unknown(n, {"loggers", "data", "query"}, "nodes.");
    read_key(n, "loggers", c.loggers);
    read_key(n, "data", c.data_nodes);
    read_key(n, "query", c.query_nodes);
  }
  read_key(j, "search_timeout_ms", c.search_timeout_ms);
  read_key(j, "merge", c.merge);
  c.check();
  return c;
}

ClusterConfig ClusterConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kConfig, "cannot read config file " + file.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfig, "config file " + file.string() + ": " + e.what());
  }
}

nlohmann::json CollectionStats::to_json() const {
  return {{"name", name},
          {"id", id},
          {"sealed_segments", sealed_segments},
          {"sealed_rows", sealed_rows},
          {"growing_segments", growing_segments},
          {"growing_rows", growing_rows},
          {"deletes", deletes},
          {"live_rows", live_rows},
          {"index_tasks_done", index_tasks_done},
          {"checkpoints", checkpoints}};
}

Cluster::Cluster(std::filesystem::path root, ClusterConfig config)
    : root_(std::move(root)), config_(config), ticks_(config.tick_interval_ms) {
  config_.check();
  std::filesystem::create_directories(root_);
  broker_ = std::make_unique<LogBroker>(root_ / "log");
  store_ = std::make_unique<ObjectStore>(root_ / "objects");
  meta_ = std::make_unique<MetaStore>(root_ / "meta");

  // Resume after the newest persisted timestamp.
  const auto last = broker_->max_timestamp();
  clock_.set(last.physical() + 1);
  tso_.observe(last);

  root_coord_ = std::make_unique<RootCoord>(*broker_, tso_, *meta_);
  data_coord_ = std::make_unique<DataCoord>(*broker_, *meta_, config_.write);
  index_coord_ =
      std::make_unique<IndexCoord>(*broker_, tso_, *meta_, *store_, *root_coord_, config_.index_coord);
  query_coord_ = std::make_unique<QueryCoord>(*broker_, tso_, *meta_, *root_coord_, config_.query_coord);
  proxy_ = std::make_unique<Proxy>(*broker_, tso_);
  proxy_->follow(0, broker_->end_offset(kCoordChannel));

  for (LoggerId id = 1; id <= config_.loggers; ++id) {
    loggers_[id] = std::make_unique<Logger>(id, *broker_, tso_, *store_, *meta_, config_.write);
    ring_.add_logger(id);
  }
  for (NodeId id = 1; id <= config_.data_nodes; ++id) {
    data_nodes_.push_back(std::make_unique<DataNode>(id, *broker_, tso_, *store_, *meta_, config_.write));
  }
  data_coord_->on_merge([this](CollectionId c, const std::vector<SegmentId>& from, SegmentId to) {
    for (auto& [_, l] : loggers_) l->on_segments_merged(c, from, to);
  });

  for (const auto& info : root_coord_->list()) open_collection(info, false);
  pump_all();
  for (std::uint32_t i = 0; i < config_.query_nodes; ++i) add_query_node();
  query_coord_->start(now_ms());
  pump_all();
  last_heartbeat_ms_ = now_ms();
}

Cluster::~Cluster() = default;

Logger& Cluster::logger_for(CollectionId collection, ShardId shard) {
  return *loggers_.at(ring_.owner_of_shard(collection, shard));
}

DataNode& Cluster::data_node_for(CollectionId collection, ShardId shard) {
  return *data_nodes_[(collection + shard) % data_nodes_.size()];
}

void Cluster::open_collection(const CollectionInfo& info, bool fresh) {
  std::map<ShardId, ChannelBootstrap> boots;
  if (!fresh) {
    if (auto cp = latest_checkpoint(*store_, info.id)) boots = cp->bootstraps(*store_);
  }
  for (ShardId s = 0; s < info.shards; ++s) {
    auto& logger = logger_for(info.id, s);
    logger.attach_shard(info, s);
    for (auto* w : logger.writers()) ticks_.add_writer(w);
    ChannelBootstrap boot;
    if (auto it = boots.find(s); it != boots.end()) boot = std::move(it->second);
    data_node_for(info.id, s).watch(info, s, std::move(boot));
  }
  Collection c;
  c.last_checkpoint_ms = now_ms();
  collections_[info.id] = c;
  for (auto& [id, node] : query_nodes_) {
    if (!down_.count(id)) serve_on(*node, info);
  }
  if (fresh) checkpoint_locked(info);
}

void Cluster::serve_on(QueryNode& node, const CollectionInfo& info) {
  std::map<ShardId, ChannelBootstrap> boots;
  if (auto cp = latest_checkpoint(*store_, info.id)) boots = cp->bootstraps(*store_);
  // Growing copies are only skipped once a sealed copy is hosted somewhere.
  std::set<SegmentId> retired;
  for (const auto& d : data_coord_->segments(info.id, true)) {
    if (!d.live() || !query_coord_->hosts(info.id, d.segment_id).empty()) retired.insert(d.segment_id);
  }
  node.serve(info, boots, retired);
}

CollectionInfo Cluster::create_collection(CollectionInfo proto) {
  auto info = root_coord_->create_collection(std::move(proto));
  open_collection(info, true);
  step();
  return info;
}

void Cluster::drop_collection(const std::string& name) {
  const auto info = root_coord_->drop_collection(name);
  for (auto& [_, l] : loggers_) {
    for (auto* w : l->writers()) ticks_.remove_writer(w);
  }
  for (auto& [_, l] : loggers_) {
    l->detach_collection(info.id);
    for (auto* w : l->writers()) ticks_.add_writer(w);
  }
  for (auto& d : data_nodes_) d->unwatch_collection(info.id);
  collections_.erase(info.id);
  step();
}

std::vector<CollectionInfo> Cluster::collections() const { return root_coord_->list(); }

CollectionInfo Cluster::collection(const std::string& name) const {
  auto info = root_coord_->find(name);
  if (!info) throw Error(ErrorCode::kNotFound, "collection '" + name + "' does not exist");
  return *info;
}

InsertAck Cluster::insert(const std::string& collection_name, Entity entity) {
  auto info = proxy_->find(collection_name);
  if (!info) info = collection(collection_name);
  if (!entity.pk) entity.pk = PrimaryKey{static_cast<std::int64_t>(tso_.allocate().raw())};
  const auto shard = shard_of(*entity.pk, info->shards);
  return logger_for(info->id, shard).handle_insert(info->id, shard, entity);
}

DeleteAck Cluster::remove(const std::string& collection_name, const PrimaryKey& pk) {
  auto info = proxy_->find(collection_name);
  if (!info) info = collection(collection_name);
  const auto shard = shard_of(pk, info->shards);
  return logger_for(info->id, shard).handle_delete(info->id, shard, pk);
}

std::vector<SegmentId> Cluster::seal(const std::string& collection_name) {
  const auto info = collection(collection_name);
  std::vector<SegmentId> out;
  for (ShardId s = 0; s < info.shards; ++s) {
    if (auto id = logger_for(info.id, s).seal_open(info.id, s, SealTrigger::kManual)) out.push_back(*id);
  }
  step();
  return out;
}

Proxy::NodeResolver Cluster::resolver() {
  return [this](NodeId id) -> const QueryNode* {
    auto it = query_nodes_.find(id);
    if (it == query_nodes_.end() || down_.count(id)) return nullptr;
    return it->second.get();
  };
}

std::uint64_t Cluster::wait_one_tick() {
  const auto before = now_ms();
  advance_to(std::max(ticks_.next_due_ms(), before + 1));
  return now_ms() - before;
}

SearchResult Cluster::search(SearchRequest request, Proxy::NodeCosts* costs) {
  if (request.travel_ts) {
    const auto snap = restore(request.collection, *request.travel_ts);
    std::size_t field = 0;
    if (!request.vector_field.empty()) {
      const auto& fields = snap.info().schema.vector_fields;
      auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.name == request.vector_field; });
      if (it == fields.end()) throw Error(ErrorCode::kInvalidArgument, "no vector field '" + request.vector_field + "'");
      field = static_cast<std::size_t>(it - fields.begin());
    }
    std::optional<FilterExpr> filter;
    if (request.filter) {
      filter = FilterExpr::parse(*request.filter);
      filter->check(snap.info().schema);
    }
    SearchResult out;
    for (const auto& q : request.queries) out.hits.push_back(snap.search(q, request.k, field, filter ? &*filter : nullptr));
    return out;
  }
  pump_all();
  return proxy_->search(std::move(request), resolver(), [this] { return wait_one_tick(); },
                        config_.search_timeout_ms, costs);
}

std::vector<SearchResult> Cluster::search_batch(std::vector<SearchRequest> requests, Proxy::NodeCosts* costs) {
  pump_all();
  std::vector<SearchResult> out(requests.size());
  for (const auto& batch : Proxy::batch_requests(requests)) {
    std::vector<SearchRequest> members;
    for (auto i : batch.members) members.push_back(requests[i]);
    auto res = proxy_->search_batch(std::move(members), resolver(), [this] { return wait_one_tick(); },
                                    config_.search_timeout_ms, costs);
    for (std::size_t m = 0; m < batch.members.size(); ++m) out[batch.members[m]] = std::move(res[m]);
  }
  return out;
}

std::size_t Cluster::pump_all() {
  std::size_t total = 0;
  for (;;) {
    const auto now = now_ms();
    std::size_t n = 0;
    for (auto& d : data_nodes_) n += d->pump();
    n += data_coord_->pump();
    n += index_coord_->pump(now);
    n += query_coord_->pump(now);
    for (auto& [id, node] : query_nodes_) {
      if (!down_.count(id)) n += node->pump();
    }
    n += proxy_->pump();
    if (n == 0) break;
    total += n;
  }
  return total;
}

void Cluster::step() {
  const auto now = now_ms();
  ticks_.emit_due(now);
  for (auto& [_, l] : loggers_) l->on_time(now);
  pump_all();

  for (auto& [id, _] : query_nodes_) {
    if (!down_.count(id)) query_coord_->heartbeat(id, now);
  }
  query_coord_->check_health(now);
  index_coord_->step(now);
  pump_all();

  if (config_.merge) {
    merge_small_segments();
    pump_all();
  }

  for (auto it = draining_.begin(); it != draining_.end();) {
    if (!query_coord_->drained(*it)) {
      ++it;
      continue;
    }
    down_.insert(*it);
    query_coord_->forget_node(*it);
    proxy_->forget_node(*it);
    it = draining_.erase(it);
  }
  maybe_checkpoint();
}

void Cluster::advance_to(std::uint64_t t_ms) {
  while (now_ms() < t_ms) {
    std::uint64_t next = std::min(t_ms, ticks_.next_due_ms());
    if (auto done = index_coord_->next_completion_ms()) next = std::min(next, std::max(*done, now_ms() + 1));
    const auto hb = config_.query_coord.heartbeat_ms;
    next = std::min(next, (now_ms() / hb + 1) * hb);
    clock_.set(std::max(next, now_ms() + 1));
    step();
  }
}

std::uint64_t Cluster::next_tick_ms() const { return ticks_.next_due_ms(); }

void Cluster::advance(std::uint64_t delta_ms) { advance_to(now_ms() + delta_ms); }

bool Cluster::settle(std::uint64_t limit_ms) {
  const auto until = now_ms() + limit_ms;
  step();
  while (!(query_coord_->settled() && index_coord_->idle() && draining_.empty())) {
    if (now_ms() >= until) return false;
    advance(config_.tick_interval_ms);
  }
  return true;
}

void Cluster::merge_small_segments() {
  for (const auto& [c, _] : collections_) {
    for (const auto& group : data_coord_->merge_candidates(c)) {
      data_node_for(c, group.front().shard_id).merge_segments(group);
    }
  }
}

void Cluster::maybe_checkpoint() {
  std::uint64_t applied = 0;
  for (const auto& d : data_nodes_) applied += d->entries_applied();
  for (auto& [id, c] : collections_) {
    if (applied - c.entries_at_checkpoint < config_.checkpoint_entries &&
        now_ms() - c.last_checkpoint_ms < config_.checkpoint_interval_ms) {
      continue;
    }
    if (auto info = root_coord_->get(id)) checkpoint_locked(*info);
  }
}

std::string Cluster::checkpoint_locked(const CollectionInfo& info) {
  std::vector<ChannelState> states;
  for (ShardId s = 0; s < info.shards; ++s) states.push_back(data_node_for(info.id, s).channel_state(info.id, s));
  std::string key;
  try {
    key = write_checkpoint(*store_, capture_checkpoint(*broker_, *store_, info, data_coord_->segments(info.id), states));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUnavailable && e.code() != ErrorCode::kIo) throw;
    return "";
  }
  auto& c = collections_[info.id];
  c.last_checkpoint_ms = now_ms();
  c.entries_at_checkpoint = 0;
  for (const auto& d : data_nodes_) c.entries_at_checkpoint += d->entries_applied();
  return key;
}

std::string Cluster::checkpoint(const std::string& collection_name) {
  const auto info = collection(collection_name);
  pump_all();
  auto key = checkpoint_locked(info);
  if (key.empty()) throw Error(ErrorCode::kUnavailable, "a seal is still waiting for its binlogs; retry later");
  return key;
}

Snapshot Cluster::restore(const std::string& collection_name, HlcTimestamp at) const {
  return restore_at(*broker_, *store_, *meta_, collection(collection_name), at);
}

GcReport Cluster::gc(const std::string& collection_name, std::uint64_t expiration_ms) {
  const auto info = collection(collection_name);
  return gc_expired(*broker_, *store_, *meta_, info, now_ms(), expiration_ms);
}

NodeId Cluster::add_query_node() {
  pump_all();
  const auto id = static_cast<NodeId>(meta_->next_id("node/query"));
  QueryNodeOptions opts;
  opts.slice_rows = config_.write.slice_rows;
  opts.temp_indexes = config_.temp_indexes;
  opts.rebuild_threshold = config_.rebuild_threshold;
  auto node = std::make_unique<QueryNode>(id, *broker_, tso_, *store_, opts);
  node->follow_coord(broker_->end_offset(kCoordChannel));
  for (const auto& info : root_coord_->list()) serve_on(*node, info);
  query_nodes_[id] = std::move(node);
  query_coord_->add_node(id, now_ms());
  pump_all();
  return id;
}

void Cluster::kill_query_node(NodeId node) {
  if (!query_nodes_.count(node)) throw Error(ErrorCode::kNotFound, "no query node " + std::to_string(node));
  down_.insert(node);
  draining_.erase(node);
}

void Cluster::remove_query_node(NodeId node) {
  if (!query_nodes_.count(node) || down_.count(node)) {
    throw Error(ErrorCode::kNotFound, "no running query node " + std::to_string(node));
  }
  draining_.insert(node);
  query_coord_->drain(node);
  pump_all();
}

std::vector<NodeId> Cluster::query_nodes() const {
  std::vector<NodeId> out;
  for (const auto& [id, _] : query_nodes_) {
    if (!down_.count(id)) out.push_back(id);
  }
  return out;
}

QueryNode& Cluster::query_node(NodeId node) {
  auto it = query_nodes_.find(node);
  if (it == query_nodes_.end()) throw Error(ErrorCode::kNotFound, "no query node " + std::to_string(node));
  return *it->second;
}

std::uint32_t Cluster::autoscale(double mean_latency_ms) {
  std::vector<NodeId> serving;
  for (auto id : query_nodes()) {
    if (!draining_.count(id)) serving.push_back(id);
  }
  const auto current = static_cast<std::uint32_t>(serving.size());
  const auto target = query_coord_->autoscale_target(mean_latency_ms, std::max<std::uint32_t>(current, 1));
  if (!config_.autoscale || target == current) return target;
  for (auto n = current; n < target; ++n) add_query_node();
  // Newest nodes go first.
  for (auto n = current; n > target; --n) remove_query_node(serving[n - 1]);
  rebalance();
  return target;
}

std::vector<SegmentMove> Cluster::rebalance() {
  pump_all();
  auto moves = query_coord_->rebalance();
  pump_all();
  return moves;
}

std::size_t Cluster::rebuild_deleted() {
  std::size_t n = 0;
  for (auto& [id, node] : query_nodes_) {
    if (!down_.count(id)) n += node->rebuild_deleted();
  }
  return n;
}

CollectionStats Cluster::stats(const std::string& collection_name) const {
  const auto info = collection(collection_name);
  CollectionStats s;
  s.name = info.name;
  s.id = info.id;
  for (const auto& d : data_coord_->segments(info.id)) {
    ++s.sealed_segments;
    s.sealed_rows += d.row_count;
  }
  for (ShardId sh = 0; sh < info.shards; ++sh) {
    const auto& node = *data_nodes_[(info.id + sh) % data_nodes_.size()];
    if (!node.watches(info.id, sh)) continue;
    const auto st = node.channel_state(info.id, sh);
    s.growing_segments += st.growing.size();
    for (const auto& g : st.growing) s.growing_rows += g.row_count;
    if (st.deletes) s.deletes += st.deletes->size();
  }
  for (const auto& t : index_coord_->tasks()) {
    if (t.collection == info.id && t.state == TaskState::kDone) ++s.index_tasks_done;
  }
  s.checkpoints = list_checkpoints(*store_, info.id).size();
  s.live_rows = restore(collection_name, HlcTimestamp::max()).size();
  return s;
}

}  // namespace logvec
