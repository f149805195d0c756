#include "logvec/read/query_node.hpp"

#include <algorithm>
#include <mutex>

#include "logvec/core/error.hpp"
#include "logvec/index/segment_search.hpp"
#include "logvec/read/filter.hpp"
#include "logvec/storage/binlog.hpp"

namespace logvec {

namespace {

using PkRows = std::unordered_map<PrimaryKey, std::vector<std::uint32_t>, PrimaryKeyHash>;

void mark_deleted(const PkRows& pk_rows, const SegmentColumns& cols, DeleteBitmap& bitmap,
                  const PrimaryKey& pk, HlcTimestamp ts) {
  auto it = pk_rows.find(pk);
  if (it == pk_rows.end()) return;
  for (auto row : it->second) {
    if (cols.lsns[row] < ts) bitmap.set(row);
  }
}

}  // namespace

struct QueryNode::Sealed {
  SegmentDescriptor desc;
  SegmentColumns cols;
  std::vector<std::unique_ptr<VectorIndex>> indexes;  // per vector field, may be null
  std::vector<IndexParams> params;
  DeleteBitmap deleted;
  PkRows pk_rows;
};

struct QueryNode::Growing {
  std::unique_ptr<GrowingSegmentBuffer> buf;
  ShardId shard = 0;
  DeleteBitmap deleted;
  PkRows pk_rows;
};

struct QueryNode::Collection {
  struct Channel {
    std::unique_ptr<Subscription> sub;
    std::uint64_t resume_offset = 0;
    std::set<SegmentId> replay_growing;
  };
  std::unique_ptr<CollectionInfo> info;  // growing buffers keep a pointer to it
  std::map<ShardId, Channel> channels;
  std::set<ShardId> assigned;
  std::map<SegmentId, Growing> growing;
  std::map<SegmentId, Sealed> sealed;
  std::set<SegmentId> retired;
  DeleteLog deletes;
};

QueryNode::QueryNode(NodeId id, LogBroker& broker, Tso& tso, ObjectStore& store, QueryNodeOptions options)
    : id_(id), broker_(broker), tso_(tso), store_(store), options_(options) {}

QueryNode::~QueryNode() = default;

void QueryNode::serve(const CollectionInfo& info, const std::map<ShardId, ChannelBootstrap>& boots,
                      const std::set<SegmentId>& retired) {
  std::unique_lock lock(mu_);
  if (collections_.count(info.id)) return;
  auto c = std::make_unique<Collection>();
  c->info = std::make_unique<CollectionInfo>(info);
  c->retired = retired;
  for (ShardId s = 0; s < info.shards; ++s) {
    const auto name = info.wal_channel(s);
    broker_.create_channel(name);
    Collection::Channel ch;
    auto it = boots.find(s);
    if (it != boots.end()) {
      const auto& b = it->second;
      ch.sub = std::make_unique<Subscription>(
          broker_, SubscriberPosition{name, std::min(b.replay_from, b.resume_offset), b.last_tick});
      ch.resume_offset = b.resume_offset;
      ch.replay_growing = b.growing;
      for (const auto& [pk, ts] : b.deletes.entries()) c->deletes.record(pk, ts);
    } else {
      ch.sub = std::make_unique<Subscription>(broker_, name, broker_.base_offset(name));
    }
    c->channels.emplace(s, std::move(ch));
  }
  collections_[info.id] = std::move(c);
}

void QueryNode::drop(CollectionId collection) {
  std::unique_lock lock(mu_);
  collections_.erase(collection);
}

bool QueryNode::serves(CollectionId collection) const {
  std::shared_lock lock(mu_);
  return collections_.count(collection) > 0;
}

std::vector<CollectionId> QueryNode::served() const {
  std::shared_lock lock(mu_);
  std::vector<CollectionId> out;
  for (const auto& [id, _] : collections_) out.push_back(id);
  return out;
}

void QueryNode::follow_coord(std::uint64_t from_offset) {
  std::unique_lock lock(mu_);
  broker_.create_channel(kCoordChannel);
  coord_ = std::make_unique<Subscription>(broker_, kCoordChannel, from_offset);
}

QueryNode::Collection& QueryNode::collection(CollectionId id) const {
  auto it = collections_.find(id);
  if (it == collections_.end()) {
    throw Error(ErrorCode::kNotFound,
                "query node " + std::to_string(id_) + " does not serve collection " + std::to_string(id));
  }
  return *it->second;
}

void QueryNode::assign_channel(CollectionId collection_id, ShardId shard, bool assigned) {
  std::unique_lock lock(mu_);
  auto& c = collection(collection_id);
  if (assigned) {
    c.assigned.insert(shard);
  } else {
    c.assigned.erase(shard);
  }
}

std::set<ShardId> QueryNode::assigned_channels(CollectionId collection_id) const {
  std::shared_lock lock(mu_);
  return collection(collection_id).assigned;
}

void QueryNode::load_segment(const SegmentDescriptor& desc) {
  std::unique_lock lock(mu_);
  load_locked(collection(desc.collection_id), desc);
}

void QueryNode::load_locked(Collection& c, const SegmentDescriptor& desc) {
  const auto& schema = c.info->schema;
  auto cols = read_segment_binlogs(store_, schema, desc);
  std::vector<std::unique_ptr<VectorIndex>> indexes(schema.vector_fields.size());
  std::vector<IndexParams> params(schema.vector_fields.size(), c.info->index);
  for (const auto& [field, key] : desc.index_paths) {
    auto f = schema.find_vector_field(field);
    if (!f) throw Error(ErrorCode::kCorrupt, "index for unknown vector field '" + field + "'");
    auto loaded = deserialize_index(store_.get(key));
    if (loaded.index->size() != cols.rows()) {
      throw Error(ErrorCode::kCorrupt, "index " + key + " covers " + std::to_string(loaded.index->size()) +
                                           " rows, segment has " + std::to_string(cols.rows()));
    }
    indexes[*f] = std::move(loaded.index);
    params[*f] = loaded.params;
  }
  host_locked(c, desc, std::move(cols), std::move(indexes));
  c.sealed[desc.segment_id].params = std::move(params);
}

void QueryNode::host_segment(const SegmentDescriptor& desc, SegmentColumns columns,
                             std::vector<std::unique_ptr<VectorIndex>> indexes) {
  std::unique_lock lock(mu_);
  auto& c = collection(desc.collection_id);
  host_locked(c, desc, std::move(columns), std::move(indexes));
}

void QueryNode::host_locked(Collection& c, const SegmentDescriptor& desc, SegmentColumns columns,
                            std::vector<std::unique_ptr<VectorIndex>> indexes) {
  Sealed s;
  s.desc = desc;
  s.cols = std::move(columns);
  s.indexes = std::move(indexes);
  s.indexes.resize(c.info->schema.vector_fields.size());
  s.params.assign(s.indexes.size(), c.info->index);
  s.deleted = DeleteBitmap(desc.segment_id, s.cols.rows());
  for (std::uint32_t r = 0; r < s.cols.rows(); ++r) {
    s.pk_rows[s.cols.pks[r]].push_back(r);
    if (c.deletes.deletes_row(s.cols.pks[r], s.cols.lsns[r])) s.deleted.set(r);
  }
  c.sealed[desc.segment_id] = std::move(s);
}

void QueryNode::release_segment(CollectionId collection_id, SegmentId segment) {
  std::unique_lock lock(mu_);
  auto it = collections_.find(collection_id);
  if (it != collections_.end()) it->second->sealed.erase(segment);
}

void QueryNode::retire_growing(CollectionId collection_id, SegmentId segment) {
  std::unique_lock lock(mu_);
  auto it = collections_.find(collection_id);
  if (it == collections_.end()) return;
  it->second->growing.erase(segment);
  it->second->retired.insert(segment);
}

std::vector<SegmentId> QueryNode::hosted(CollectionId collection_id) const {
  std::shared_lock lock(mu_);
  std::vector<SegmentId> out;
  auto it = collections_.find(collection_id);
  if (it == collections_.end()) return out;
  for (const auto& [id, _] : it->second->sealed) out.push_back(id);
  return out;
}

std::vector<SegmentId> QueryNode::growing_segments(CollectionId collection_id) const {
  std::shared_lock lock(mu_);
  std::vector<SegmentId> out;
  auto it = collections_.find(collection_id);
  if (it == collections_.end()) return out;
  for (const auto& [id, _] : it->second->growing) out.push_back(id);
  return out;
}

std::uint64_t QueryNode::hosted_rows() const {
  std::shared_lock lock(mu_);
  std::uint64_t rows = 0;
  for (const auto& [_, c] : collections_) {
    for (const auto& [__, s] : c->sealed) rows += s.cols.rows();
  }
  return rows;
}

std::uint64_t QueryNode::deleted_rows(CollectionId collection_id, SegmentId segment) const {
  std::shared_lock lock(mu_);
  auto& c = collection(collection_id);
  if (auto it = c.sealed.find(segment); it != c.sealed.end()) return it->second.deleted.deleted_count();
  if (auto it = c.growing.find(segment); it != c.growing.end()) return it->second.deleted.deleted_count();
  throw Error(ErrorCode::kNotFound, "segment " + std::to_string(segment) + " not on this node");
}

void QueryNode::publish_loaded(const SegmentDescriptor& desc, bool ok, const std::string& detail) {
  CoordMessage m;
  m.type = CoordType::kSegmentLoaded;
  m.collection = desc.collection_id;
  m.shard = desc.shard_id;
  m.segment = desc.segment_id;
  m.node = id_;
  m.flag = ok ? 0 : 1;
  m.detail = detail;
  publish_stamped(broker_, tso_, kCoordChannel, LogEntry::coord({}, m));
}

void QueryNode::apply_segment_command(const CoordMessage& m) {
  std::unique_lock lock(mu_);
  apply_coord(m);
}

void QueryNode::apply_coord(const CoordMessage& m) {
  auto c_it = collections_.find(m.collection);
  Collection* c = c_it == collections_.end() ? nullptr : c_it->second.get();
  switch (m.type) {
    case CoordType::kLoadSegment: {
      if (m.node != id_) return;
      const auto desc = SegmentDescriptor::from_json(nlohmann::json::parse(m.detail));
      if (!c) {
        publish_loaded(desc, false, "collection not served");
        return;
      }
      try {
        load_locked(*c, desc);
      } catch (const Error& e) {
        publish_loaded(desc, false, e.what());
        return;
      }
      publish_loaded(desc, true, "");
      return;
    }
    case CoordType::kReleaseSegment:
      if (m.node == id_ && c) c->sealed.erase(m.segment);
      return;
    case CoordType::kSegmentLoaded:
      if (m.flag == 0 && c) {
        c->growing.erase(m.segment);
        c->retired.insert(m.segment);
      }
      return;
    case CoordType::kCollectionDropped:
      collections_.erase(m.collection);
      return;
    case CoordType::kWatchChannel:
      if (m.node == id_ && c) {
        if (m.flag) {
          c->assigned.insert(m.shard);
        } else {
          c->assigned.erase(m.shard);
        }
      }
      return;
    default:
      return;
  }
}

void QueryNode::apply(Collection& c, ShardId shard, std::uint64_t offset, const LogEntry& e) {
  auto& ch = c.channels.at(shard);
  const bool replaying = offset < ch.resume_offset;
  switch (e.kind) {
    case EntryKind::kInsert: {
      const auto& r = e.as_insert();
      if (replaying && !ch.replay_growing.count(r.segment)) return;
      if (c.retired.count(r.segment) || c.sealed.count(r.segment)) return;
      auto& g = c.growing[r.segment];
      if (!g.buf) {
        g.buf = std::make_unique<GrowingSegmentBuffer>(*c.info, r.segment, shard, options_.slice_rows,
                                                       options_.temp_indexes);
        g.shard = shard;
        g.deleted = DeleteBitmap(r.segment, 0);
      }
      if (g.buf->sealed()) return;
      const auto row = static_cast<std::uint32_t>(g.buf->rows());
      if (g.buf->append(r.entity)) g.buf->build_pending_temp_indexes();
      const auto& pk = g.buf->columns().pks[row];
      g.pk_rows[pk].push_back(row);
      g.deleted.grow(row + 1);
      if (c.deletes.deletes_row(pk, r.entity.lsn)) g.deleted.set(row);
      return;
    }
    case EntryKind::kDelete: {
      if (replaying) return;
      const auto& pk = e.as_delete().pk;
      c.deletes.record(pk, e.timestamp);
      for (auto& [_, g] : c.growing) mark_deleted(g.pk_rows, g.buf->columns(), g.deleted, pk, e.timestamp);
      for (auto& [_, s] : c.sealed) mark_deleted(s.pk_rows, s.cols, s.deleted, pk, e.timestamp);
      return;
    }
    case EntryKind::kCoord: {
      const auto& m = e.as_coord();
      if (m.type != CoordType::kSealSegment) return;
      if (auto it = c.growing.find(m.segment); it != c.growing.end() && !it->second.buf->sealed()) {
        it->second.buf->seal(e.timestamp);
      }
      return;
    }
    case EntryKind::kTimeTick:
      for (auto& [_, g] : c.growing) {
        if (g.shard == shard) g.buf->advance(e.timestamp);
      }
      return;
    case EntryKind::kDdl:
      return;
  }
}

std::size_t QueryNode::pump(std::size_t budget) {
  std::unique_lock lock(mu_);
  std::size_t applied = 0;
  if (coord_) {
    while (applied < budget) {
      auto e = coord_->poll();
      if (!e) break;
      ++applied;
      if (e->kind == EntryKind::kCoord) apply_coord(e->as_coord());
    }
  }
  for (auto& [_, c] : collections_) {
    for (auto& [shard, ch] : c->channels) {
      while (applied < budget) {
        const auto offset = ch.sub->position().next_offset;
        auto e = ch.sub->poll();
        if (!e) break;
        apply(*c, shard, offset, *e);
        ++applied;
      }
    }
  }
  return applied;
}

bool QueryNode::caught_up() const {
  std::shared_lock lock(mu_);
  if (coord_ && !coord_->caught_up()) return false;
  for (const auto& [_, c] : collections_) {
    for (const auto& [__, ch] : c->channels) {
      if (!ch.sub->caught_up()) return false;
    }
  }
  return true;
}

HlcTimestamp QueryNode::serviceable_ts(CollectionId collection_id) const {
  std::shared_lock lock(mu_);
  const auto& c = collection(collection_id);
  HlcTimestamp out = HlcTimestamp::max();
  for (const auto& [_, ch] : c.channels) out = std::min(out, ch.sub->position().last_time_tick);
  return c.channels.empty() ? HlcTimestamp{} : out;
}

GuardDecision QueryNode::guard(const SearchRequest& request) const {
  return guard_consistency(request.tau_ms, request.issue_ts, serviceable_ts(request.collection_id));
}

PartialResult QueryNode::search_local(const SearchRequest& request, kernels::ScanStats* stats) const {
  std::shared_lock lock(mu_);
  const auto& c = collection(request.collection_id);
  const auto& schema = c.info->schema;
  std::size_t field = 0;
  if (!request.vector_field.empty()) {
    auto f = schema.find_vector_field(request.vector_field);
    if (!f) throw Error(ErrorCode::kInvalidArgument, "unknown vector field '" + request.vector_field + "'");
    field = *f;
  }
  const std::size_t dim = schema.vector_fields[field].dim;
  const Metric metric = request.metric.value_or(c.info->metric);
  const SearchKnobs knobs = request.knobs.value_or(c.info->index.search);
  std::optional<FilterExpr> filter;
  if (request.filter) filter = FilterExpr::parse(*request.filter);

  struct Source {
    SegmentId segment;
    const SegmentColumns* cols;
    RowPredicate pred;
    const Sealed* sealed = nullptr;
    const Growing* growing = nullptr;
  };
  std::vector<Source> sources;
  for (const auto& [id, s] : c.sealed) {
    Source src{id, &s.cols, {}, &s, nullptr};
    if (filter) src.pred = filter->bind(schema, s.cols);
    sources.push_back(std::move(src));
  }
  for (const auto& [id, g] : c.growing) {
    if (!c.assigned.count(g.shard)) continue;
    Source src{id, &g.buf->columns(), {}, nullptr, &g};
    if (filter) src.pred = filter->bind(schema, g.buf->columns());
    sources.push_back(std::move(src));
  }

  PartialResult out;
  out.node = id_;
  for (const auto& q : request.queries) {
    if (q.size() != dim) {
      throw Error(ErrorCode::kDimensionMismatch, "query has dimension " + std::to_string(q.size()) +
                                                     ", field expects " + std::to_string(dim));
    }
    std::vector<std::vector<Hit>> per_source;
    per_source.reserve(sources.size());
    for (const auto& src : sources) {
      const RowPredicate* pred = filter ? &src.pred : nullptr;
      std::vector<Neighbor> found;
      if (src.sealed) {
        SegmentSearchInput in;
        in.vectors = src.sealed->cols.vectors[field];
        in.dim = dim;
        in.index = src.sealed->indexes[field].get();
        in.deleted = &src.sealed->deleted;
        in.filter = pred;
        in.knobs = knobs;
        found = segment_search(in, q, metric, request.k, stats);
      } else {
        found = src.growing->buf->search(field, q, metric, request.k, knobs, &src.growing->deleted, pred, stats);
      }
      std::vector<Hit> hits;
      hits.reserve(found.size());
      for (const auto& n : found) hits.push_back(Hit{src.cols->pks[n.row], n.score, src.segment});
      per_source.push_back(std::move(hits));
    }
    std::vector<const std::vector<Hit>*> lists;
    for (const auto& h : per_source) lists.push_back(&h);
    out.hits.push_back(reduce_hits(metric, lists, request.k));
  }
  return out;
}

std::size_t QueryNode::rebuild_deleted() {
  std::unique_lock lock(mu_);
  std::size_t rebuilt = 0;
  for (auto& [_, c] : collections_) {
    const auto& schema = c->info->schema;
    for (auto& [id, s] : c->sealed) {
      if (s.deleted.deleted_count() == 0 || !should_rebuild(s.deleted, s.cols.rows(), options_.rebuild_threshold)) {
        continue;
      }
      auto live = SegmentColumns::empty_for(schema);
      for (std::uint32_t r = 0; r < s.cols.rows(); ++r) {
        if (!s.deleted.test(r)) live.append(schema, s.cols.row(schema, r));
      }
      for (std::size_t f = 0; f < s.indexes.size(); ++f) {
        if (!s.indexes[f]) continue;
        if (live.rows() == 0) {
          s.indexes[f].reset();
          continue;
        }
        auto params = s.params[f];
        if (params.kind == IndexKind::kIvfFlat) {
          params.nlist = static_cast<std::uint32_t>(std::min<std::size_t>(params.nlist, live.rows()));
          params.search.nprobe = std::min(params.search.nprobe, params.nlist);
        }
        s.indexes[f] = build_index(params, s.indexes[f]->metric(), live.vectors[f], schema.vector_fields[f].dim);
      }
      s.cols = std::move(live);
      s.deleted = DeleteBitmap(id, s.cols.rows());
      s.pk_rows.clear();
      for (std::uint32_t r = 0; r < s.cols.rows(); ++r) s.pk_rows[s.cols.pks[r]].push_back(r);
      ++rebuilt;
    }
  }
  rebuilds_ += rebuilt;
  return rebuilt;
}

}  // namespace logvec
