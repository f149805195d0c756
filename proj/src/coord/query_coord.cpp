#include "logvec/coord/query_coord.hpp"

#include <algorithm>

#include "logvec/core/error.hpp"

namespace logvec {

QueryCoord::QueryCoord(LogBroker& broker, Tso& tso, MetaStore& meta, const RootCoord& root,
                       QueryCoordOptions options)
    : broker_(broker),
      tso_(tso),
      meta_(meta),
      root_(root),
      options_(options),
      coord_(broker, meta, kCoordChannel, "query-coord"),
      ddl_(broker, meta, kDdlChannel, "query-coord") {}

void QueryCoord::publish(CoordMessage m) { publish_stamped(broker_, tso_, kCoordChannel, LogEntry::coord({}, m)); }

void QueryCoord::start(std::uint64_t now_ms) {
  for (const auto& info : root_.list()) {
    for (const auto& [_, v] : meta_.list("segment/" + std::to_string(info.id) + "/")) {
      auto d = SegmentDescriptor::from_json(nlohmann::json::parse(v));
      if (d.sealed() && d.live()) track(d);
    }
  }
  pump(now_ms);
  for (const auto& info : root_.list()) assign_channels(info);
  for (const auto& [key, _] : segments_) ensure_hosted(key);
}

std::size_t QueryCoord::pump(std::uint64_t now_ms) {
  (void)now_ms;
  std::size_t n = ddl_.drain([&](const LogEntry& e) { apply_ddl(e); });
  n += coord_.drain([&](const LogEntry& e) { apply_coord(e); });
  return n;
}

void QueryCoord::apply_ddl(const LogEntry& e) {
  if (e.kind != EntryKind::kDdl) return;
  const auto& d = e.as_ddl();
  if (d.op == DdlOp::kCreateCollection && root_.get(d.collection)) {
    assign_channels(CollectionInfo::from_json(nlohmann::json::parse(d.body)));
  }
}

void QueryCoord::track(const SegmentDescriptor& desc, std::vector<SegmentId> replaces) {
  const Key key{desc.collection_id, desc.segment_id};
  if (segments_.count(key)) return;
  Entry e;
  e.desc = desc;
  e.replaces = std::move(replaces);
  segments_.emplace(key, std::move(e));
}

void QueryCoord::forget_segment(const Key& key) {
  segments_.erase(key);
  for (auto& [_, ev] : evacuating_) ev.first.erase(key);
}

void QueryCoord::apply_coord(const LogEntry& e) {
  if (e.kind != EntryKind::kCoord) return;
  const auto& m = e.as_coord();
  const Key key{m.collection, m.segment};
  switch (m.type) {
    case CoordType::kSegmentSealed:
    case CoordType::kSegmentsMerged: {
      if (!root_.get(m.collection)) return;
      auto desc = SegmentDescriptor::from_json(nlohmann::json::parse(m.detail));
      track(desc, m.type == CoordType::kSegmentsMerged ? m.segments : std::vector<SegmentId>{});
      ensure_hosted(key);
      return;
    }
    case CoordType::kIndexBuilt: {
      auto it = segments_.find(key);
      if (it == segments_.end() || m.flag != 0) return;
      const auto j = nlohmann::json::parse(m.detail);
      it->second.desc.index_paths[j.at("field").get<std::string>()] = j.at("key").get<std::string>();
      // Hosts swap in the indexed copy in place.
      std::set<NodeId> targets = it->second.hosts;
      for (const auto& [n, _] : it->second.pending) targets.insert(n);
      for (auto n : targets) {
        if (alive(n)) request_load(key, n, 1);
      }
      return;
    }
    case CoordType::kSegmentLoaded: {
      auto it = segments_.find(key);
      if (it == segments_.end()) return;
      auto& entry = it->second;
      auto p = entry.pending.find(m.node);
      if (p == entry.pending.end() && !entry.hosts.count(m.node)) return;
      const int attempt = p == entry.pending.end() ? 1 : p->second;
      if (p != entry.pending.end()) entry.pending.erase(p);
      if (!alive(m.node)) return;
      if (m.flag != 0) {
        ++failed_loads_;
        if (attempt < options_.max_load_attempts && entry.hosts.empty()) {
          std::set<NodeId> exclude{m.node};
          for (const auto& [n, _] : entry.pending) exclude.insert(n);
          if (auto n = pick_node(exclude, load_map())) request_load(key, *n, attempt + 1);
        }
        return;
      }
      entry.hosts.insert(m.node);
      if (auto ra = entry.release_after.find(m.node); ra != entry.release_after.end()) {
        for (auto old : ra->second) {
          if (!entry.hosts.erase(old)) continue;
          CoordMessage rel;
          rel.type = CoordType::kReleaseSegment;
          rel.collection = m.collection;
          rel.segment = m.segment;
          rel.node = old;
          publish(rel);
        }
        entry.release_after.erase(ra);
      }
      if (!entry.replaces.empty()) {
        const auto replaced = std::move(entry.replaces);
        entry.replaces.clear();
        for (auto old_id : replaced) {
          const Key old{m.collection, old_id};
          auto o = segments_.find(old);
          if (o == segments_.end()) continue;
          for (auto n : o->second.hosts) {
            CoordMessage rel;
            rel.type = CoordType::kReleaseSegment;
            rel.collection = m.collection;
            rel.segment = old_id;
            rel.node = n;
            publish(rel);
          }
          forget_segment(old);
        }
      }
      finish_evacuations();
      return;
    }
    case CoordType::kCollectionDropped: {
      std::erase_if(segments_, [&](const auto& kv) { return kv.first.first == m.collection; });
      std::erase_if(channels_, [&](const auto& kv) { return kv.first.first == m.collection; });
      for (auto& [_, ev] : evacuating_) {
        std::erase_if(ev.first, [&](const Key& k) { return k.first == m.collection; });
        std::erase_if(ev.second, [&](const auto& c) { return c.first == m.collection; });
      }
      finish_evacuations();
      return;
    }
    default:
      return;
  }
}

std::map<NodeId, std::uint64_t> QueryCoord::load_map() const {
  std::map<NodeId, std::uint64_t> load;
  for (const auto& [id, n] : nodes_) {
    if (n.alive && !n.draining) load[id] = 0;
  }
  for (const auto& [_, e] : segments_) {
    std::set<NodeId> on = e.hosts;
    for (const auto& [n, __] : e.pending) on.insert(n);
    for (auto n : on) {
      if (auto it = load.find(n); it != load.end()) it->second += e.desc.row_count;
    }
  }
  return load;
}

std::optional<NodeId> QueryCoord::pick_node(const std::set<NodeId>& exclude,
                                            const std::map<NodeId, std::uint64_t>& load) const {
  std::optional<NodeId> best;
  std::uint64_t best_load = 0;
  for (const auto& [id, l] : load) {
    if (exclude.count(id)) continue;
    if (!best || l < best_load) {
      best = id;
      best_load = l;
    }
  }
  return best;
}

void QueryCoord::request_load(const Key& key, NodeId node, int attempt) {
  auto& entry = segments_.at(key);
  entry.pending[node] = attempt;
  CoordMessage m;
  m.type = CoordType::kLoadSegment;
  m.collection = key.first;
  m.segment = key.second;
  m.shard = entry.desc.shard_id;
  m.node = node;
  m.detail = entry.desc.to_json().dump();
  publish(m);
}

void QueryCoord::ensure_hosted(const Key& key) {
  auto& entry = segments_.at(key);
  std::set<NodeId> holders;
  for (auto n : entry.hosts) {
    if (alive(n) && !evacuating_.count(n)) holders.insert(n);
  }
  for (const auto& [n, _] : entry.pending) {
    if (alive(n)) holders.insert(n);
  }
  if (!holders.empty()) return;
  std::set<NodeId> exclude(entry.hosts.begin(), entry.hosts.end());
  if (auto n = pick_node(exclude, load_map())) request_load(key, *n, 1);
}

void QueryCoord::assign_channels(const CollectionInfo& info) {
  for (ShardId s = 0; s < info.shards; ++s) {
    auto it = channels_.find({info.id, s});
    if (it != channels_.end() && alive(it->second) && !nodes_.at(it->second).draining) continue;
    std::map<NodeId, std::size_t> owned;
    for (const auto& [id, n] : nodes_) {
      if (n.alive && !n.draining) owned[id] = 0;
    }
    if (owned.empty()) return;
    for (const auto& [_, n] : channels_) {
      if (auto o = owned.find(n); o != owned.end()) ++o->second;
    }
    NodeId best = owned.begin()->first;
    for (const auto& [id, c] : owned) {
      if (c < owned[best]) best = id;
    }
    channels_[{info.id, s}] = best;
    CoordMessage m;
    m.type = CoordType::kWatchChannel;
    m.collection = info.id;
    m.shard = s;
    m.node = best;
    m.flag = 1;
    publish(m);
  }
}

void QueryCoord::add_node(NodeId node, std::uint64_t now_ms) {
  NodeState st;
  st.last_heartbeat = now_ms;
  nodes_[node] = st;
  for (const auto& info : root_.list()) assign_channels(info);
  for (const auto& [key, _] : segments_) ensure_hosted(key);
}

void QueryCoord::heartbeat(NodeId node, std::uint64_t now_ms) {
  auto it = nodes_.find(node);
  if (it != nodes_.end() && it->second.alive) it->second.last_heartbeat = now_ms;
}

std::vector<NodeId> QueryCoord::check_health(std::uint64_t now_ms) {
  std::vector<NodeId> dead;
  const auto limit = std::uint64_t{options_.missed_heartbeats} * options_.heartbeat_ms;
  for (auto& [id, n] : nodes_) {
    if (n.alive && now_ms > n.last_heartbeat + limit) {
      n.alive = false;
      dead.push_back(id);
    }
  }
  for (auto id : dead) evacuate(id);
  return dead;
}

void QueryCoord::drain(NodeId node) {
  auto it = nodes_.find(node);
  if (it == nodes_.end() || !it->second.alive) return;
  it->second.draining = true;
  evacuate(node);
}

bool QueryCoord::drained(NodeId node) const {
  if (evacuating_.count(node)) return false;
  for (const auto& [_, e] : segments_) {
    if (e.hosts.count(node) || e.pending.count(node)) return false;
  }
  for (const auto& [_, n] : channels_) {
    if (n == node) return false;
  }
  return true;
}

void QueryCoord::forget_node(NodeId node) {
  nodes_.erase(node);
  evacuating_.erase(node);
  for (auto& [_, e] : segments_) {
    e.hosts.erase(node);
    e.pending.erase(node);
    e.release_after.erase(node);
  }
}

void QueryCoord::evacuate(NodeId node) {
  auto& ev = evacuating_[node];
  for (auto& [key, e] : segments_) {
    e.pending.erase(node);
    e.release_after.erase(node);
    if (e.hosts.count(node)) ev.first.insert(key);
  }
  for (const auto& [key, _] : segments_) ensure_hosted(key);
  for (auto& [ch, owner] : channels_) {
    if (owner == node) ev.second.insert(ch);
  }
  for (const auto& info : root_.list()) assign_channels(info);
  finish_evacuations();
}

void QueryCoord::finish_evacuations() {
  const bool none_healthy = healthy_nodes().empty();
  for (auto it = evacuating_.begin(); it != evacuating_.end();) {
    const NodeId node = it->first;
    auto& [keys, chans] = it->second;
    bool done = true;
    if (!none_healthy) {
      for (const auto& key : keys) {
        auto s = segments_.find(key);
        if (s == segments_.end()) continue;
        bool covered = false;
        for (auto h : s->second.hosts) covered = covered || (h != node && alive(h));
        done = done && covered;
      }
    }
    if (!done) {
      ++it;
      continue;
    }
    for (const auto& key : keys) {
      auto s = segments_.find(key);
      if (s == segments_.end() || !s->second.hosts.erase(node)) continue;
      CoordMessage rel;
      rel.type = CoordType::kReleaseSegment;
      rel.collection = key.first;
      rel.segment = key.second;
      rel.node = node;
      publish(rel);
    }
    for (const auto& [c, shard] : chans) {
      CoordMessage m;
      m.type = CoordType::kWatchChannel;
      m.collection = c;
      m.shard = shard;
      m.node = node;
      m.flag = 0;
      publish(m);
      if (auto o = channels_.find({c, shard}); o != channels_.end() && o->second == node) channels_.erase(o);
    }
    it = evacuating_.erase(it);
  }
}

std::vector<SegmentMove> QueryCoord::rebalance() {
  std::vector<SegmentMove> plan;
  auto load = load_map();
  if (load.size() < 2) return plan;
  for (;;) {
    auto [mn, mx] = std::minmax_element(load.begin(), load.end(),
                                        [](const auto& a, const auto& b) { return a.second < b.second; });
    const NodeId from = mx->first, to = mn->first;
    const double hi = static_cast<double>(mx->second), lo = static_cast<double>(mn->second);
    if (hi == 0 || (lo > 0 && hi / lo <= options_.balance_ratio)) break;
    // The largest segment that still narrows the gap.
    const Key* best = nullptr;
    std::uint64_t best_rows = 0;
    for (const auto& [key, e] : segments_) {
      if (!e.hosts.count(from) || e.hosts.count(to) || e.pending.count(to) || !e.pending.empty()) continue;
      if (e.release_after.size() > 0) continue;
      const auto rows = e.desc.row_count;
      if (rows == 0 || static_cast<double>(rows) >= hi - lo) continue;
      if (!best || rows > best_rows) {
        best = &key;
        best_rows = rows;
      }
    }
    if (!best) break;
    auto& entry = segments_.at(*best);
    entry.release_after[to].insert(from);
    request_load(*best, to, 1);
    plan.push_back({best->first, best->second, from, to});
    mx->second -= best_rows;
    mn->second += best_rows;
  }
  return plan;
}

std::uint32_t QueryCoord::autoscale_target(double mean_latency_ms, std::uint32_t current) const {
  if (mean_latency_ms < options_.scale_low_ms) return std::max(options_.min_nodes, current / 2);
  if (mean_latency_ms > options_.scale_high_ms) return std::min(options_.max_nodes, current * 2);
  return current;
}

std::vector<NodeId> QueryCoord::healthy_nodes() const {
  std::vector<NodeId> out;
  for (const auto& [id, n] : nodes_) {
    if (n.alive) out.push_back(id);
  }
  return out;
}

bool QueryCoord::alive(NodeId node) const {
  auto it = nodes_.find(node);
  return it != nodes_.end() && it->second.alive;
}

std::map<NodeId, std::uint64_t> QueryCoord::hosted_rows() const {
  std::map<NodeId, std::uint64_t> out;
  for (const auto& [id, n] : nodes_) {
    if (n.alive) out[id] = 0;
  }
  for (const auto& [_, e] : segments_) {
    for (auto h : e.hosts) {
      if (auto it = out.find(h); it != out.end()) it->second += e.desc.row_count;
    }
  }
  return out;
}

std::set<NodeId> QueryCoord::hosts(CollectionId collection, SegmentId segment) const {
  auto it = segments_.find({collection, segment});
  return it == segments_.end() ? std::set<NodeId>{} : it->second.hosts;
}

std::optional<NodeId> QueryCoord::channel_owner(CollectionId collection, ShardId shard) const {
  auto it = channels_.find({collection, shard});
  if (it == channels_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> QueryCoord::coverage_violations() const {
  std::vector<std::string> out;
  if (unavailable()) return out;
  for (const auto& [key, e] : segments_) {
    bool ok = false;
    for (auto h : e.hosts) ok = ok || alive(h);
    for (const auto& [n, _] : e.pending) ok = ok || alive(n);
    if (!ok) out.push_back("segment " + std::to_string(key.first) + "/" + std::to_string(key.second));
  }
  for (const auto& info : root_.list()) {
    for (ShardId s = 0; s < info.shards; ++s) {
      auto o = channel_owner(info.id, s);
      if (!o || !alive(*o)) out.push_back("channel " + info.wal_channel(s));
    }
  }
  return out;
}

bool QueryCoord::settled() const {
  if (!evacuating_.empty()) return false;
  for (const auto& [_, e] : segments_) {
    if (!e.pending.empty() || !e.release_after.empty() || !e.replaces.empty()) return false;
  }
  return true;
}

}  // namespace logvec
