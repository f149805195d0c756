#include "logvec/log/entry.hpp"

#include "logvec/core/error.hpp"

namespace logvec {

const char* entry_kind_name(EntryKind kind) {
  switch (kind) {
    case EntryKind::kInsert: return "insert";
    case EntryKind::kDelete: return "delete";
    case EntryKind::kDdl: return "ddl";
    case EntryKind::kCoord: return "coord";
    case EntryKind::kTimeTick: return "time_tick";
  }
  return "?";
}

const char* coord_type_name(CoordType type) {
  switch (type) {
    case CoordType::kSealSegment: return "seal_segment";
    case CoordType::kSegmentSealed: return "segment_sealed";
    case CoordType::kIndexBuilt: return "index_built";
    case CoordType::kLoadSegment: return "load_segment";
    case CoordType::kReleaseSegment: return "release_segment";
    case CoordType::kCollectionDropped: return "collection_dropped";
    case CoordType::kSegmentLoaded: return "segment_loaded";
    case CoordType::kWatchChannel: return "watch_channel";
    case CoordType::kSegmentsMerged: return "segments_merged";
    case CoordType::kCheckpointWritten: return "checkpoint_written";
  }
  return "?";
}

std::vector<std::uint8_t> encode_entry(const LogEntry& entry) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(entry.kind));
  w.u64(entry.timestamp.raw());
  switch (entry.kind) {
    case EntryKind::kInsert: {
      const auto& r = entry.as_insert();
      w.u64(r.collection);
      w.u32(r.shard);
      w.u64(r.segment);
      write_entity(w, r.entity);
      break;
    }
    case EntryKind::kDelete: {
      const auto& r = entry.as_delete();
      w.u64(r.collection);
      w.u32(r.shard);
      w.u64(r.segment);
      write_pk(w, r.pk);
      break;
    }
    case EntryKind::kDdl: {
      const auto& r = entry.as_ddl();
      w.u8(static_cast<std::uint8_t>(r.op));
      w.u64(r.collection);
      w.str(r.name);
      w.str(r.body);
      break;
    }
    case EntryKind::kCoord: {
      const auto& m = entry.as_coord();
      w.u8(static_cast<std::uint8_t>(m.type));
      w.u64(m.collection);
      w.u64(m.segment);
      w.u32(m.node);
      w.u32(m.shard);
      w.u8(m.flag);
      w.u32(static_cast<std::uint32_t>(m.segments.size()));
      for (auto s : m.segments) w.u64(s);
      w.str(m.detail);
      break;
    }
    case EntryKind::kTimeTick:
      break;
  }
  return w.take();
}

LogEntry decode_entry(std::span<const std::uint8_t> record) {
  ByteReader r(record);
  LogEntry e;
  const auto kind = r.u8();
  if (kind > static_cast<std::uint8_t>(EntryKind::kTimeTick)) {
    throw Error(ErrorCode::kCorrupt, "bad log entry kind");
  }
  e.kind = static_cast<EntryKind>(kind);
  e.timestamp = HlcTimestamp::from_raw(r.u64());
  switch (e.kind) {
    case EntryKind::kInsert: {
      InsertRecord rec;
      rec.collection = r.u64();
      rec.shard = r.u32();
      rec.segment = r.u64();
      rec.entity = read_entity(r);
      e.payload = std::move(rec);
      break;
    }
    case EntryKind::kDelete: {
      DeleteRecord rec;
      rec.collection = r.u64();
      rec.shard = r.u32();
      rec.segment = r.u64();
      rec.pk = read_pk(r);
      e.payload = std::move(rec);
      break;
    }
    case EntryKind::kDdl: {
      DdlRecord rec;
      rec.op = static_cast<DdlOp>(r.u8());
      rec.collection = r.u64();
      rec.name = r.str();
      rec.body = r.str();
      e.payload = std::move(rec);
      break;
    }
    case EntryKind::kCoord: {
      CoordMessage m;
      m.type = static_cast<CoordType>(r.u8());
      m.collection = r.u64();
      m.segment = r.u64();
      m.node = r.u32();
      m.shard = r.u32();
      m.flag = r.u8();
      m.segments.resize(r.u32());
      for (auto& s : m.segments) s = r.u64();
      m.detail = r.str();
      e.payload = std::move(m);
      break;
    }
    case EntryKind::kTimeTick:
      e.payload = TimeTick{};
      break;
  }
  if (!r.done()) throw Error(ErrorCode::kCorrupt, "trailing bytes in log record");
  return e;
}

}  // namespace logvec
