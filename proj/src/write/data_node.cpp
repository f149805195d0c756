#include "logvec/write/data_node.hpp"

#include "logvec/core/error.hpp"
#include "logvec/storage/binlog.hpp"

namespace logvec {

struct DataNode::Channel {
  CollectionInfo info;
  ShardId shard = 0;
  std::unique_ptr<Subscription> sub;
  ChannelBootstrap boot;
  std::map<SegmentId, std::unique_ptr<GrowingSegmentBuffer>> growing;
  std::map<SegmentId, std::uint64_t> first_offset;
  DeleteLog deletes;
  // Sealed buffers whose binlogs have not been written yet.
  std::vector<std::pair<std::unique_ptr<GrowingSegmentBuffer>, SealTrigger>> pending;
};

DataNode::DataNode(NodeId id, LogBroker& broker, Tso& tso, ObjectStore& store, MetaStore& meta,
                   WriteOptions options)
    : id_(id), broker_(broker), tso_(tso), store_(store), meta_(meta), options_(options) {}

DataNode::~DataNode() = default;

void DataNode::watch(const CollectionInfo& info, ShardId shard, ChannelBootstrap boot) {
  std::lock_guard lock(mu_);
  if (channels_.count({info.id, shard})) return;
  auto ch = std::make_unique<Channel>();
  ch->info = info;
  ch->shard = shard;
  const auto name = info.wal_channel(shard);
  broker_.create_channel(name);
  ch->deletes = std::move(boot.deletes);
  ch->sub = std::make_unique<Subscription>(
      broker_, SubscriberPosition{name, std::min(boot.replay_from, boot.resume_offset), boot.last_tick});
  boot.deletes = {};
  ch->boot = std::move(boot);
  channels_[{info.id, shard}] = std::move(ch);
}

void DataNode::unwatch(CollectionId collection, ShardId shard) {
  std::lock_guard lock(mu_);
  channels_.erase({collection, shard});
}

void DataNode::unwatch_collection(CollectionId collection) {
  std::lock_guard lock(mu_);
  std::erase_if(channels_, [&](const auto& kv) { return kv.first.first == collection; });
}

std::vector<std::pair<CollectionId, ShardId>> DataNode::watched() const {
  std::lock_guard lock(mu_);
  std::vector<std::pair<CollectionId, ShardId>> out;
  for (const auto& [key, _] : channels_) out.push_back(key);
  return out;
}

bool DataNode::watches(CollectionId collection, ShardId shard) const {
  std::lock_guard lock(mu_);
  return channels_.count({collection, shard}) > 0;
}

DataNode::Channel& DataNode::channel(CollectionId collection, ShardId shard) const {
  auto it = channels_.find({collection, shard});
  if (it == channels_.end()) {
    throw Error(ErrorCode::kNotFound, "data node " + std::to_string(id_) + " does not watch " +
                                          wal_channel_name(collection, shard));
  }
  return *it->second;
}

std::size_t DataNode::pump(std::size_t budget) {
  std::lock_guard lock(mu_);
  std::size_t applied = 0;
  for (auto& [_, ch] : channels_) {
    if (!flush_pending(*ch)) continue;
    while (applied < budget) {
      const auto offset = ch->sub->position().next_offset;
      auto e = ch->sub->poll();
      if (!e) break;
      apply(*ch, offset, *e);
      ++applied;
    }
  }
  entries_applied_ += applied;
  return applied;
}

bool DataNode::caught_up() const {
  std::lock_guard lock(mu_);
  for (const auto& [_, ch] : channels_) {
    if (!ch->pending.empty() || !ch->sub->caught_up()) return false;
  }
  return true;
}

void DataNode::apply(Channel& ch, std::uint64_t offset, const LogEntry& e) {
  const bool replaying = offset < ch.boot.resume_offset;
  switch (e.kind) {
    case EntryKind::kInsert: {
      const auto& r = e.as_insert();
      if (replaying && !ch.boot.growing.count(r.segment)) return;
      auto& buf = ch.growing[r.segment];
      if (!buf) {
        buf = std::make_unique<GrowingSegmentBuffer>(ch.info, r.segment, ch.shard, options_.slice_rows);
        ch.first_offset[r.segment] = offset;
      }
      if (buf->append(r.entity)) buf->build_pending_temp_indexes();
      break;
    }
    case EntryKind::kDelete:
      if (!replaying) ch.deletes.record(e.as_delete().pk, e.timestamp);
      break;
    case EntryKind::kCoord: {
      const auto& m = e.as_coord();
      if (m.type == CoordType::kSealSegment && ch.growing.count(m.segment)) {
        seal(ch, m.segment, e.timestamp, static_cast<SealTrigger>(m.flag));
      }
      break;
    }
    case EntryKind::kTimeTick:
      for (auto& [_, buf] : ch.growing) buf->advance(e.timestamp);
      break;
    case EntryKind::kDdl:
      break;
  }
}

void DataNode::seal(Channel& ch, SegmentId segment, HlcTimestamp at, SealTrigger trigger) {
  auto it = ch.growing.find(segment);
  it->second->seal(at);
  ch.pending.emplace_back(std::move(it->second), trigger);
  ch.growing.erase(it);
  ch.first_offset.erase(segment);
  flush_pending(ch);
}

// Writes binlogs for sealed buffers and announces them. Returns false while a
// store failure keeps some buffer pending; the channel then waits.
bool DataNode::flush_pending(Channel& ch) {
  while (!ch.pending.empty()) {
    auto& [buf, trigger] = ch.pending.front();
    auto desc = buf->descriptor();
    try {
      desc.binlog_paths =
          write_segment_binlogs(store_, ch.info.schema, desc.collection_id, desc.segment_id, buf->columns());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kIo) throw;
      return false;
    }
    CoordMessage m;
    m.type = CoordType::kSegmentSealed;
    m.collection = desc.collection_id;
    m.shard = desc.shard_id;
    m.segment = desc.segment_id;
    m.node = id_;
    m.flag = static_cast<std::uint8_t>(trigger);
    m.detail = desc.to_json().dump();
    publish_stamped(broker_, tso_, kCoordChannel, LogEntry::coord({}, m));
    ++sealed_count_;
    ch.pending.erase(ch.pending.begin());
  }
  return true;
}

SegmentDescriptor DataNode::merge_segments(const std::vector<SegmentDescriptor>& inputs) {
  std::lock_guard lock(mu_);
  if (inputs.empty()) throw Error(ErrorCode::kInvalidArgument, "nothing to merge");
  const auto collection = inputs.front().collection_id;
  const auto shard = inputs.front().shard_id;
  for (const auto& d : inputs) {
    if (d.collection_id != collection || d.shard_id != shard) {
      throw Error(ErrorCode::kInvalidArgument, "merge inputs span collections or shards");
    }
    if (!d.sealed() || !d.live()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "segment " + std::to_string(d.segment_id) + " is not a live sealed segment");
    }
  }
  auto& ch = channel(collection, shard);
  const auto& schema = ch.info.schema;
  auto merged = SegmentColumns::empty_for(schema);
  SegmentDescriptor out;
  out.collection_id = collection;
  out.shard_id = shard;
  out.state = SegmentState::kSealed;
  for (const auto& d : inputs) {
    auto cols = read_segment_binlogs(store_, schema, d);
    for (std::size_t r = 0; r < cols.rows(); ++r) {
      if (ch.deletes.deletes_row(cols.pks[r], cols.lsns[r])) continue;
      auto e = cols.row(schema, r);
      merged.append(schema, e);
      out.byte_size += schema.row_bytes(e);
    }
    out.progress = std::max(out.progress, d.progress);
  }
  out.segment_id = meta_.next_id("segment/" + std::to_string(collection));
  out.row_count = merged.rows();
  out.slice_count = static_cast<std::uint32_t>((out.row_count + options_.slice_rows - 1) / options_.slice_rows);
  out.binlog_paths = with_retries(3, [&] {
    return write_segment_binlogs(store_, schema, collection, out.segment_id, merged);
  });

  CoordMessage m;
  m.type = CoordType::kSegmentsMerged;
  m.collection = collection;
  m.shard = shard;
  m.segment = out.segment_id;
  m.node = id_;
  m.flag = static_cast<std::uint8_t>(SealTrigger::kMerge);
  for (const auto& d : inputs) m.segments.push_back(d.segment_id);
  m.detail = out.to_json().dump();
  publish_stamped(broker_, tso_, kCoordChannel, LogEntry::coord({}, m));
  ++sealed_count_;
  return out;
}

ChannelState DataNode::channel_state(CollectionId collection, ShardId shard) const {
  std::lock_guard lock(mu_);
  auto& ch = channel(collection, shard);
  ChannelState st;
  st.collection = collection;
  st.shard = shard;
  st.channel = ch.info.wal_channel(shard);
  st.position = ch.sub->position();
  for (const auto& [id, buf] : ch.growing) st.growing.push_back(buf->descriptor());
  st.growing_first_offset = ch.first_offset;
  st.deletes = &ch.deletes;
  st.pending_seals = ch.pending.size();
  return st;
}

const GrowingSegmentBuffer* DataNode::growing(CollectionId collection, SegmentId segment) const {
  std::lock_guard lock(mu_);
  for (const auto& [key, ch] : channels_) {
    if (key.first != collection) continue;
    if (auto it = ch->growing.find(segment); it != ch->growing.end()) return it->second.get();
  }
  return nullptr;
}

}  // namespace logvec
