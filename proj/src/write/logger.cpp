#include "logvec/write/logger.hpp"

#include "logvec/core/error.hpp"

namespace logvec {

struct Logger::Shard {
  CollectionInfo info;
  ShardId id = 0;
  std::unique_ptr<ChannelWriter> writer;
  std::unique_ptr<EntitySegmentMap> map;
  std::optional<SegmentId> open;
  std::uint64_t open_rows = 0;
  std::uint64_t open_bytes = 0;
  std::uint64_t last_insert_ms = 0;
  std::map<SegmentId, SegmentId> redirects;  // merged input -> output
  std::uint64_t unflushed = 0;
  std::uint64_t map_offset = 0;   // WAL prefix covered by flushed runs
  std::uint64_t open_offset = 0;  // first WAL offset of the open segment
};

std::string mapping_prefix(CollectionId collection, ShardId shard) {
  return collection_prefix(collection) + "mapping/shard-" + std::to_string(shard) + "/";
}

std::string segment_meta_key(CollectionId collection, SegmentId segment) {
  return "segment/" + std::to_string(collection) + "/" + std::to_string(segment);
}

Logger::Logger(LoggerId id, LogBroker& broker, Tso& tso, ObjectStore& store, MetaStore& meta,
               WriteOptions options)
    : id_(id), broker_(broker), tso_(tso), store_(store), meta_(meta), options_(options) {
  options_.check();
}

Logger::~Logger() = default;

std::string Logger::state_key(CollectionId collection, ShardId shard) const {
  return "logger/" + std::to_string(collection) + "/" + std::to_string(shard);
}

Logger::Shard& Logger::shard(CollectionId collection, ShardId shard) const {
  auto it = shards_.find({collection, shard});
  if (it == shards_.end()) {
    throw Error(ErrorCode::kUnavailable, "logger " + std::to_string(id_) + " does not own shard " +
                                             std::to_string(collection) + "/" + std::to_string(shard));
  }
  return *it->second;
}

bool Logger::owns(CollectionId collection, ShardId shard) const {
  std::lock_guard lock(mu_);
  return shards_.count({collection, shard}) > 0;
}

void Logger::attach_shard(const CollectionInfo& info, ShardId shard_id) {
  std::lock_guard lock(mu_);
  if (shards_.count({info.id, shard_id})) return;
  auto s = std::make_unique<Shard>();
  s->info = info;
  s->id = shard_id;
  const auto channel = info.wal_channel(shard_id);
  s->writer = std::make_unique<ChannelWriter>(broker_, tso_, channel);
  s->map = std::make_unique<EntitySegmentMap>(store_, mapping_prefix(info.id, shard_id));

  std::uint64_t& map_offset = s->map_offset;
  std::uint64_t& open_offset = s->open_offset;
  if (auto state = meta_.get(state_key(info.id, shard_id))) {
    auto j = nlohmann::json::parse(*state);
    map_offset = j.value("map_offset", std::uint64_t{0});
    open_offset = j.value("open_offset", std::uint64_t{0});
  }
  for (const auto& [key, value] : meta_.list("segment/" + std::to_string(info.id) + "/")) {
    auto d = SegmentDescriptor::from_json(nlohmann::json::parse(value));
    if (d.merged_into) s->redirects[d.segment_id] = *d.merged_into;
  }

  // Replay the tail the runs do not cover, and recover the open segment.
  const auto base = broker_.base_offset(channel);
  const auto end = broker_.end_offset(channel);
  const auto from = std::max(base, std::min(map_offset, open_offset));
  for (auto off = from; off < end; ++off) {
    const auto e = broker_.read(channel, off);
    if (e.kind == EntryKind::kInsert) {
      const auto& r = e.as_insert();
      if (off >= map_offset) {
        s->map->put(*r.entity.pk, r.segment);
        ++s->unflushed;
      }
      if (off >= open_offset) {
        if (s->open != r.segment) {
          s->open = r.segment;
          s->open_offset = off;
          s->open_rows = 0;
          s->open_bytes = 0;
        }
        ++s->open_rows;
        s->open_bytes += info.schema.row_bytes(r.entity);
        s->last_insert_ms = e.timestamp.physical();
      }
    } else if (e.kind == EntryKind::kDelete && off >= map_offset) {
      s->map->erase(e.as_delete().pk);
      ++s->unflushed;
    } else if (e.kind == EntryKind::kCoord && off >= open_offset) {
      const auto& m = e.as_coord();
      if (m.type == CoordType::kSealSegment && s->open == m.segment) s->open.reset();
    }
  }
  shards_[{info.id, shard_id}] = std::move(s);
}

void Logger::detach_shard(CollectionId collection, ShardId shard_id) {
  std::lock_guard lock(mu_);
  shards_.erase({collection, shard_id});
}

void Logger::detach_collection(CollectionId collection) {
  std::lock_guard lock(mu_);
  std::erase_if(shards_, [&](const auto& kv) { return kv.first.first == collection; });
}

SegmentId Logger::resolve(const Shard& s, SegmentId seg) const {
  for (auto it = s.redirects.find(seg); it != s.redirects.end(); it = s.redirects.find(seg)) {
    seg = it->second;
  }
  return seg;
}

InsertAck Logger::handle_insert(CollectionId collection, ShardId shard_id, const Entity& entity) {
  std::lock_guard lock(mu_);
  auto& s = shard(collection, shard_id);
  auto check = validate_entity(s.info.schema, entity);
  if (!check.ok()) {
    std::string msg = "invalid entity:";
    for (const auto& v : check.violations) msg += " " + v + ";";
    throw Error(ErrorCode::kInvalidArgument, msg);
  }
  if (!entity.pk) throw Error(ErrorCode::kInvalidArgument, "entity reached the logger without a pk");
  if (shard_of(*entity.pk, s.info.shards) != shard_id) {
    throw Error(ErrorCode::kInvalidArgument, "pk " + pk_to_string(*entity.pk) + " belongs to another shard");
  }
  if (s.map->find(*entity.pk)) {
    throw Error(ErrorCode::kAlreadyExists, "duplicate primary key " + pk_to_string(*entity.pk));
  }
  const auto channel = s.info.wal_channel(shard_id);
  if (!s.open) {
    s.open = meta_.next_id("segment/" + std::to_string(collection));
    s.open_rows = 0;
    s.open_bytes = 0;
    s.open_offset = broker_.end_offset(channel);
    meta_.put(state_key(collection, shard_id),
              nlohmann::json{{"map_offset", s.map_offset}, {"open_offset", s.open_offset}}.dump());
  }
  InsertRecord rec;
  rec.collection = collection;
  rec.shard = shard_id;
  rec.segment = *s.open;
  rec.entity = entity;
  auto appended = s.writer->append([&](HlcTimestamp ts) {
    rec.entity.lsn = ts;
    return LogEntry::insert(ts, rec);
  });
  s.map->put(*entity.pk, rec.segment);
  ++s.unflushed;
  ++s.open_rows;
  s.open_bytes += s.info.schema.row_bytes(entity);
  s.last_insert_ms = appended.timestamp.physical();

  InsertAck ack{*entity.pk, appended.timestamp, shard_id, rec.segment, appended.offset};
  if (s.open_rows >= options_.seal_rows || s.open_bytes >= options_.seal_bytes) {
    seal_locked(s, SealTrigger::kSize);
  }
  maybe_flush(s);
  return ack;
}

DeleteAck Logger::handle_delete(CollectionId collection, ShardId shard_id, const PrimaryKey& pk) {
  std::lock_guard lock(mu_);
  auto& s = shard(collection, shard_id);
  auto seg = s.map->find(pk);
  if (!seg) throw Error(ErrorCode::kNotFound, "no entity with pk " + pk_to_string(pk));
  DeleteRecord rec{collection, shard_id, resolve(s, *seg), pk};
  auto appended = s.writer->append([&](HlcTimestamp ts) { return LogEntry::remove(ts, rec); });
  s.map->erase(pk);
  ++s.unflushed;
  maybe_flush(s);
  return {appended.timestamp, rec.segment, appended.offset};
}

void Logger::seal_locked(Shard& s, SealTrigger trigger) {
  if (!s.open) return;
  CoordMessage m;
  m.type = CoordType::kSealSegment;
  m.collection = s.info.id;
  m.shard = s.id;
  m.segment = *s.open;
  m.flag = static_cast<std::uint8_t>(trigger);
  s.writer->append([&](HlcTimestamp ts) { return LogEntry::coord(ts, m); });
  s.open.reset();
}

std::optional<SegmentId> Logger::seal_open(CollectionId collection, ShardId shard_id,
                                           SealTrigger trigger) {
  std::lock_guard lock(mu_);
  auto& s = shard(collection, shard_id);
  auto seg = s.open;
  seal_locked(s, trigger);
  return seg;
}

int Logger::on_time(std::uint64_t now_ms) {
  std::lock_guard lock(mu_);
  int sealed = 0;
  for (auto& [_, s] : shards_) {
    if (s->open && now_ms >= s->last_insert_ms + options_.inactivity_ms) {
      seal_locked(*s, SealTrigger::kInactivity);
      ++sealed;
    }
  }
  return sealed;
}

void Logger::on_segments_merged(CollectionId collection, const std::vector<SegmentId>& from,
                                SegmentId to) {
  std::lock_guard lock(mu_);
  for (auto& [key, s] : shards_) {
    if (key.first != collection) continue;
    for (auto seg : from) s->redirects[seg] = to;
  }
}

void Logger::maybe_flush(Shard& s) {
  if (s.unflushed < options_.map_flush_entries) return;
  const auto channel = s.info.wal_channel(s.id);
  try {
    s.map->flush();
  } catch (const Error&) {
    return;  // memtable kept; retried on the next write
  }
  s.unflushed = 0;
  s.map_offset = broker_.end_offset(channel);
  meta_.put(state_key(s.info.id, s.id),
            nlohmann::json{{"map_offset", s.map_offset}, {"open_offset", s.open_offset}}.dump());
}

void Logger::flush_mappings() {
  std::lock_guard lock(mu_);
  for (auto& [_, s] : shards_) {
    s->unflushed = std::max<std::uint64_t>(s->unflushed, options_.map_flush_entries);
    maybe_flush(*s);
  }
}

std::optional<SegmentId> Logger::lookup(CollectionId collection, ShardId shard_id,
                                        const PrimaryKey& pk) const {
  std::lock_guard lock(mu_);
  auto& s = shard(collection, shard_id);
  auto seg = s.map->find(pk);
  if (!seg) return std::nullopt;
  return resolve(s, *seg);
}

std::optional<SegmentId> Logger::open_segment(CollectionId collection, ShardId shard_id) const {
  std::lock_guard lock(mu_);
  return shard(collection, shard_id).open;
}

std::vector<ChannelWriter*> Logger::writers() {
  std::lock_guard lock(mu_);
  std::vector<ChannelWriter*> out;
  for (auto& [_, s] : shards_) out.push_back(s->writer.get());
  return out;
}

}  // namespace logvec
