#include "logvec/timetravel/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "logvec/core/error.hpp"
#include "logvec/index/segment_search.hpp"
#include "logvec/storage/binlog.hpp"

namespace logvec {

namespace {

std::string horizon_key(CollectionId c) { return "timetravel/" + std::to_string(c) + "/horizon"; }

std::string deltalog_key(CollectionId c, ShardId s, std::uint64_t count) {
  return collection_prefix(c) + "deltalog/shard-" + std::to_string(s) + "-" + std::to_string(count) + ".mdl";
}

std::string segment_prefix(CollectionId c, SegmentId s) { return segment_key(c, s, ""); }

}  // namespace

std::uint64_t ChannelCheckpoint::replay_from() const {
  std::uint64_t from = position.next_offset;
  for (const auto& [_, off] : growing_first_offset) from = std::min(from, off);
  return from;
}

nlohmann::json ChannelCheckpoint::to_json() const {
  nlohmann::json j;
  j["shard"] = shard;
  j["channel"] = channel;
  j["position"] = position;
  j["growing"] = nlohmann::json::array();
  for (const auto& d : growing) j["growing"].push_back(d.to_json());
  j["growing_first_offset"] = nlohmann::json::object();
  for (const auto& [s, off] : growing_first_offset) j["growing_first_offset"][std::to_string(s)] = off;
  j["deltalog"] = deltalog;
  j["delete_count"] = delete_count;
  return j;
}

ChannelCheckpoint ChannelCheckpoint::from_json(const nlohmann::json& j) {
  ChannelCheckpoint c;
  c.shard = j.at("shard").get<ShardId>();
  c.channel = j.at("channel").get<std::string>();
  c.position = j.at("position").get<SubscriberPosition>();
  for (const auto& d : j.at("growing")) c.growing.push_back(SegmentDescriptor::from_json(d));
  for (const auto& [s, off] : j.at("growing_first_offset").items()) {
    c.growing_first_offset[std::stoull(s)] = off.get<std::uint64_t>();
  }
  c.deltalog = j.at("deltalog").get<std::string>();
  c.delete_count = j.at("delete_count").get<std::uint64_t>();
  return c;
}

nlohmann::json Checkpoint::to_json() const {
  nlohmann::json j;
  j["collection"] = collection;
  j["ts"] = ts.raw();
  j["sealed"] = nlohmann::json::array();
  for (const auto& d : sealed) j["sealed"].push_back(d.to_json());
  j["channels"] = nlohmann::json::array();
  for (const auto& c : channels) j["channels"].push_back(c.to_json());
  return j;
}

Checkpoint Checkpoint::from_json(const nlohmann::json& j) {
  Checkpoint cp;
  cp.collection = j.at("collection").get<CollectionId>();
  cp.ts = HlcTimestamp::from_raw(j.at("ts").get<std::uint64_t>());
  for (const auto& d : j.at("sealed")) cp.sealed.push_back(SegmentDescriptor::from_json(d));
  for (const auto& c : j.at("channels")) cp.channels.push_back(ChannelCheckpoint::from_json(c));
  return cp;
}

std::map<ShardId, ChannelBootstrap> Checkpoint::bootstraps(const ObjectStore& store) const {
  std::map<ShardId, ChannelBootstrap> out;
  for (const auto& c : channels) {
    ChannelBootstrap b;
    b.replay_from = c.replay_from();
    b.resume_offset = c.position.next_offset;
    for (const auto& d : c.growing) b.growing.insert(d.segment_id);
    if (!c.deltalog.empty()) b.deletes = DeleteLog::decode(store.get(c.deltalog));
    b.last_tick = c.position.last_time_tick;
    out[c.shard] = std::move(b);
  }
  return out;
}

std::string checkpoint_prefix(CollectionId collection) { return collection_prefix(collection) + "checkpoint/"; }

std::string checkpoint_key(CollectionId collection, HlcTimestamp ts) {
  // Zero padded so key order is timestamp order.
  char buf[32];
  std::snprintf(buf, sizeof buf, "%020llu", static_cast<unsigned long long>(ts.raw()));
  return checkpoint_prefix(collection) + "checkpoint-" + buf + ".json";
}

Checkpoint capture_checkpoint(const LogBroker& broker, ObjectStore& store, const CollectionInfo& info,
                              const std::vector<SegmentDescriptor>& sealed,
                              const std::vector<ChannelState>& channels) {
  Checkpoint cp;
  cp.collection = info.id;
  for (const auto& d : sealed) {
    if (d.collection_id == info.id && d.sealed() && d.live()) cp.sealed.push_back(d);
  }
  std::sort(cp.sealed.begin(), cp.sealed.end(),
            [](const auto& a, const auto& b) { return a.segment_id < b.segment_id; });
  for (const auto& st : channels) {
    if (st.collection != info.id) continue;
    if (st.pending_seals > 0) {
      throw Error(ErrorCode::kUnavailable, st.channel + " has a seal waiting for its binlogs");
    }
    ChannelCheckpoint c;
    c.shard = st.shard;
    c.channel = st.channel;
    c.position = st.position;
    c.growing = st.growing;
    c.growing_first_offset = st.growing_first_offset;
    if (st.deletes && st.deletes->size() > 0) {
      c.delete_count = st.deletes->size();
      c.deltalog = deltalog_key(info.id, st.shard, c.delete_count);
      // A delete log only grows, so the count names its content.
      if (!store.exists(c.deltalog)) {
        const auto bytes = st.deletes->encode();
        with_retries(3, [&] { store.put(c.deltalog, bytes); });
      }
    }
    const auto next = st.position.next_offset;
    if (next > broker.base_offset(st.channel)) {
      cp.ts = std::max(cp.ts, broker.read(st.channel, next - 1).timestamp);
    }
    cp.channels.push_back(std::move(c));
  }
  std::sort(cp.channels.begin(), cp.channels.end(), [](const auto& a, const auto& b) { return a.shard < b.shard; });
  return cp;
}

std::string write_checkpoint(ObjectStore& store, const Checkpoint& cp) {
  const auto key = checkpoint_key(cp.collection, cp.ts);
  if (!store.exists(key)) {
    const auto text = cp.to_json().dump(1);
    with_retries(3, [&] { store.put(key, text); });
  }
  return key;
}

std::vector<std::pair<HlcTimestamp, std::string>> list_checkpoints(const ObjectStore& store,
                                                                   CollectionId collection) {
  std::vector<std::pair<HlcTimestamp, std::string>> out;
  const auto prefix = checkpoint_prefix(collection) + "checkpoint-";
  for (const auto& key : store.list(prefix)) {
    if (key.size() < prefix.size() + 5 || key.substr(key.size() - 5) != ".json") continue;
    const auto digits = key.substr(prefix.size(), key.size() - prefix.size() - 5);
    out.emplace_back(HlcTimestamp::from_raw(std::stoull(digits)), key);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Checkpoint read_checkpoint(const ObjectStore& store, const std::string& key) {
  try {
    return Checkpoint::from_json(nlohmann::json::parse(store.get_text(key)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorrupt, "checkpoint " + key + ": " + e.what());
  }
}

std::optional<Checkpoint> latest_checkpoint(const ObjectStore& store, CollectionId collection,
                                            HlcTimestamp at_or_before) {
  const auto all = list_checkpoints(store, collection);
  for (auto it = all.rbegin(); it != all.rend(); ++it) {
    if (it->first <= at_or_before) return read_checkpoint(store, it->second);
  }
  return std::nullopt;
}

Snapshot::Snapshot(CollectionInfo info, HlcTimestamp ts, SegmentColumns rows, std::string checkpoint)
    : info_(std::move(info)), ts_(ts), rows_(std::move(rows)), checkpoint_(std::move(checkpoint)) {}

std::vector<Hit> Snapshot::search(std::span<const float> query, std::size_t k, std::size_t vector_field,
                                  const FilterExpr* filter) const {
  const auto& schema = info_.schema;
  if (vector_field >= schema.vector_fields.size()) {
    throw Error(ErrorCode::kInvalidArgument, "no vector field " + std::to_string(vector_field));
  }
  const std::size_t dim = schema.vector_fields[vector_field].dim;
  if (query.size() != dim) {
    throw Error(ErrorCode::kDimensionMismatch,
                "query has " + std::to_string(query.size()) + " dimensions, field has " + std::to_string(dim));
  }
  std::optional<RowPredicate> pred;
  if (filter) pred = filter->bind(schema, rows_);
  SegmentSearchInput in;
  in.vectors = rows_.vectors[vector_field];
  in.dim = dim;
  in.filter = pred ? &*pred : nullptr;
  // Every admitted row, so ties at the cut are settled by pk below.
  const auto neighbors = segment_search(in, query, info_.metric, rows_.rows());
  std::vector<Hit> hits;
  hits.reserve(neighbors.size());
  for (const auto& n : neighbors) hits.push_back(Hit{rows_.pks[n.row], n.score, 0});
  return reduce_hits(info_.metric, {&hits}, k);
}

Snapshot restore_at(const LogBroker& broker, const ObjectStore& store, const MetaStore& meta,
                    const CollectionInfo& info, HlcTimestamp t) {
  const auto horizon = history_horizon(meta, info.id);
  if (horizon && t < *horizon) {
    throw Error(ErrorCode::kHistoryExpired, "history of collection '" + info.name + "' before " +
                                                std::to_string(horizon->raw()) + " has expired");
  }
  auto cp = latest_checkpoint(store, info.id, t);
  const auto& schema = info.schema;
  auto cols = SegmentColumns::empty_for(schema);
  if (!cp) {
    if (horizon) throw Error(ErrorCode::kHistoryExpired, "no retained checkpoint at or before the timestamp");
    return Snapshot(info, t, std::move(cols), "");
  }

  std::vector<Entity> rows;
  for (const auto& d : cp->sealed) {
    const auto seg = read_segment_binlogs(store, schema, d);
    for (std::size_t r = 0; r < seg.rows(); ++r) rows.push_back(seg.row(schema, r));
  }
  DeleteLog deletes;
  for (const auto& ch : cp->channels) {
    if (!ch.deltalog.empty()) {
      const auto saved = DeleteLog::decode(store.get(ch.deltalog));
      for (const auto& [pk, ts] : saved.entries()) deletes.record(pk, ts);
    }
    const auto from = ch.replay_from();
    if (from < broker.base_offset(ch.channel)) {
      throw Error(ErrorCode::kHistoryExpired, ch.channel + " no longer holds the entries this restore needs");
    }
    std::set<SegmentId> growing;
    for (const auto& d : ch.growing) growing.insert(d.segment_id);
    const auto resume = ch.position.next_offset;
    const auto end = broker.end_offset(ch.channel);
    for (auto off = from; off < end; ++off) {
      const auto e = broker.read(ch.channel, off);
      if (off >= resume && e.timestamp > t) break;  // channels are timestamp ordered
      if (e.kind == EntryKind::kInsert) {
        const auto& r = e.as_insert();
        if (off < resume && !growing.count(r.segment)) continue;
        auto entity = r.entity;
        entity.lsn = e.timestamp;
        rows.push_back(std::move(entity));
      } else if (e.kind == EntryKind::kDelete && off >= resume) {
        deletes.record(e.as_delete().pk, e.timestamp);
      }
    }
  }
  for (const auto& e : rows) {
    if (!deletes.deletes_row_at(*e.pk, e.lsn, t)) cols.append(schema, e);
  }
  return Snapshot(info, t, std::move(cols), checkpoint_key(info.id, cp->ts));
}

GcReport gc_expired(LogBroker& broker, ObjectStore& store, MetaStore& meta, const CollectionInfo& info,
                    std::uint64_t now_ms, std::uint64_t expiration_ms) {
  GcReport report;
  report.horizon = history_horizon(meta, info.id);
  if (expiration_ms == kNeverExpire || expiration_ms > now_ms) return report;
  const HlcTimestamp cut(now_ms - expiration_ms, static_cast<std::uint32_t>(HlcTimestamp::kLogicalMask));
  const auto all = list_checkpoints(store, info.id);
  std::optional<std::size_t> keep;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i].first <= cut) keep = i;
  }
  if (!keep) return report;
  const auto kept = read_checkpoint(store, all[*keep].second);

  for (std::size_t i = 0; i < *keep; ++i) {
    store.remove(all[i].second);
    report.deleted.push_back(all[i].second);
  }
  for (const auto& ch : kept.channels) {
    const auto base = ch.replay_from();
    if (base > broker.base_offset(ch.channel)) {
      broker.truncate_prefix(ch.channel, base);
      report.truncated[ch.channel] = base;
    }
  }

  // Objects still reachable from a retained checkpoint stay.
  std::set<std::string> deltalogs;
  std::set<SegmentId> referenced;
  for (std::size_t i = *keep; i < all.size(); ++i) {
    const auto cp = i == *keep ? kept : read_checkpoint(store, all[i].second);
    for (const auto& d : cp.sealed) referenced.insert(d.segment_id);
    for (const auto& ch : cp.channels) {
      if (!ch.deltalog.empty()) deltalogs.insert(ch.deltalog);
    }
  }
  for (const auto& key : store.list(collection_prefix(info.id) + "deltalog/")) {
    // Newer deltalogs may belong to a checkpoint being written.
    if (deltalogs.count(key)) continue;
    bool older = true;
    for (const auto& ch : kept.channels) {
      const auto p = collection_prefix(info.id) + "deltalog/shard-" + std::to_string(ch.shard) + "-";
      if (key.rfind(p, 0) == 0 && std::stoull(key.substr(p.size())) >= ch.delete_count) older = false;
    }
    if (!older) continue;
    store.remove(key);
    report.deleted.push_back(key);
  }
  const auto seg_prefix = "segment/" + std::to_string(info.id) + "/";
  // Descriptors stay: loggers follow merged_into to redirect deletes.
  for (const auto& [_, body] : meta.list(seg_prefix)) {
    const auto d = SegmentDescriptor::from_json(nlohmann::json::parse(body));
    if (d.live() || d.retired_at > kept.ts || referenced.count(d.segment_id)) continue;
    for (const auto& key : store.list(segment_prefix(info.id, d.segment_id))) {
      store.remove(key);
      report.deleted.push_back(key);
    }
  }
  meta.put(horizon_key(info.id), std::to_string(kept.ts.raw()));
  report.horizon = kept.ts;
  return report;
}

std::optional<HlcTimestamp> history_horizon(const MetaStore& meta, CollectionId collection) {
  auto v = meta.get(horizon_key(collection));
  if (!v) return std::nullopt;
  return HlcTimestamp::from_raw(std::stoull(*v));
}

}  // namespace logvec
