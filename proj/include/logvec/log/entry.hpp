#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "logvec/core/bytes.hpp"
#include "logvec/core/hlc.hpp"
#include "logvec/core/schema.hpp"
#include "logvec/core/segment.hpp"

namespace logvec {

enum class EntryKind : std::uint8_t {
  kInsert = 0,
  kDelete = 1,
  kDdl = 2,
  kCoord = 3,
  kTimeTick = 4,
};

const char* entry_kind_name(EntryKind kind);

struct InsertRecord {
  CollectionId collection = 0;
  ShardId shard = 0;
  SegmentId segment = 0;
  Entity entity;
};

struct DeleteRecord {
  CollectionId collection = 0;
  ShardId shard = 0;
  SegmentId segment = 0;
  PrimaryKey pk;
};

enum class DdlOp : std::uint8_t { kCreateCollection = 0, kDropCollection = 1 };

struct DdlRecord {
  DdlOp op = DdlOp::kCreateCollection;
  CollectionId collection = 0;
  std::string name;
  std::string body;  // JSON collection descriptor for creates
};

enum class CoordType : std::uint8_t {
  kSealSegment = 0,      // logger -> data nodes, on the WAL channel
  kSegmentSealed = 1,    // data node: binlogs written
  kIndexBuilt = 2,       // index node: index object written
  kLoadSegment = 3,      // query coord -> query node
  kReleaseSegment = 4,   // query coord -> query node(s)
  kCollectionDropped = 5,
  kSegmentLoaded = 6,    // query node -> query coord
  kWatchChannel = 7,     // query coord: node serves a WAL channel's growing data
  kSegmentsMerged = 8,   // data node: merge output sealed
  kCheckpointWritten = 9,
};

const char* coord_type_name(CoordType type);

// Typed coordination message. Unused id fields stay zero; `detail` carries
// a JSON document where the message needs more than ids.
struct CoordMessage {
  CoordType type = CoordType::kSealSegment;
  CollectionId collection = 0;
  SegmentId segment = 0;
  NodeId node = 0;
  ShardId shard = 0;
  std::uint8_t flag = 0;  // seal trigger, or 1 = growing copy on release
  std::vector<SegmentId> segments;
  std::string detail;
};

struct TimeTick {};

using LogPayload =
    std::variant<TimeTick, InsertRecord, DeleteRecord, DdlRecord, CoordMessage>;

struct LogEntry {
  EntryKind kind = EntryKind::kTimeTick;
  HlcTimestamp timestamp;
  LogPayload payload;

  static LogEntry insert(HlcTimestamp ts, InsertRecord r) {
    return {EntryKind::kInsert, ts, std::move(r)};
  }
  static LogEntry remove(HlcTimestamp ts, DeleteRecord r) {
    return {EntryKind::kDelete, ts, std::move(r)};
  }
  static LogEntry ddl(HlcTimestamp ts, DdlRecord r) { return {EntryKind::kDdl, ts, std::move(r)}; }
  static LogEntry coord(HlcTimestamp ts, CoordMessage m) {
    return {EntryKind::kCoord, ts, std::move(m)};
  }
  static LogEntry time_tick(HlcTimestamp ts) { return {EntryKind::kTimeTick, ts, TimeTick{}}; }

  const InsertRecord& as_insert() const { return std::get<InsertRecord>(payload); }
  const DeleteRecord& as_delete() const { return std::get<DeleteRecord>(payload); }
  const DdlRecord& as_ddl() const { return std::get<DdlRecord>(payload); }
  const CoordMessage& as_coord() const { return std::get<CoordMessage>(payload); }
};

// Record layout: u8 kind, u64 timestamp, kind-specific payload.
std::vector<std::uint8_t> encode_entry(const LogEntry& entry);
LogEntry decode_entry(std::span<const std::uint8_t> record);

}  // namespace logvec
