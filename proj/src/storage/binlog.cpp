#include "logvec/storage/binlog.hpp"

#include <algorithm>

#include "logvec/core/bytes.hpp"
#include "logvec/core/error.hpp"

namespace logvec {

namespace {

enum class ColumnKind { kPk, kVector, kLabel, kNumeric, kLsn };

struct ColumnRef {
  ColumnKind kind;
  std::size_t index = 0;
};

ColumnRef resolve(const Schema& schema, std::uint32_t field) {
  if (field == Schema::kLsnFieldId) return {ColumnKind::kLsn};
  if (field == 0) return {ColumnKind::kPk};
  std::size_t i = field - 1;
  if (i < schema.vector_fields.size()) return {ColumnKind::kVector, i};
  i -= schema.vector_fields.size();
  if (i < schema.label_fields.size()) return {ColumnKind::kLabel, i};
  i -= schema.label_fields.size();
  if (i < schema.numeric_fields.size()) return {ColumnKind::kNumeric, i};
  throw Error(ErrorCode::kInvalidArgument, "unknown field id " + std::to_string(field));
}

std::vector<std::uint32_t> all_fields(const Schema& schema) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t f = 0; f < schema.field_count(); ++f) out.push_back(f);
  out.push_back(Schema::kLsnFieldId);
  return out;
}

}  // namespace

std::string binlog_kind(std::uint32_t field) {
  if (field == Schema::kLsnFieldId) return "binlog/lsn";
  return "binlog/field-" + std::to_string(field);
}

std::vector<std::uint8_t> encode_binlog(const Schema& schema, CollectionId collection,
                                        SegmentId segment, std::uint32_t field,
                                        const SegmentColumns& cols) {
  const auto ref = resolve(schema, field);
  const auto rows = cols.rows();
  ByteWriter w;
  w.raw("MBL1");
  w.u16(BinlogHeader::kVersion);
  w.u64(collection);
  w.u64(segment);
  w.u32(field);
  w.u64(rows);
  HlcTimestamp lo = rows ? *std::min_element(cols.lsns.begin(), cols.lsns.end()) : HlcTimestamp();
  HlcTimestamp hi = rows ? *std::max_element(cols.lsns.begin(), cols.lsns.end()) : HlcTimestamp();
  w.u64(lo.raw());
  w.u64(hi.raw());
  switch (ref.kind) {
    case ColumnKind::kPk:
      for (const auto& pk : cols.pks) {
        if (schema.pk_type == PkType::kInt64) {
          w.i64(std::get<std::int64_t>(pk));
        } else {
          w.str(std::get<std::string>(pk));
        }
      }
      break;
    case ColumnKind::kVector:
      w.f32s(cols.vectors[ref.index]);
      break;
    case ColumnKind::kLabel:
      for (const auto& s : cols.labels[ref.index]) w.str(s);
      break;
    case ColumnKind::kNumeric:
      for (const auto& v : cols.numerics[ref.index]) {
        if (schema.numeric_fields[ref.index].type == NumericType::kInt64) {
          w.i64(std::get<std::int64_t>(v));
        } else {
          w.f32(std::get<float>(v));
        }
      }
      break;
    case ColumnKind::kLsn:
      for (auto ts : cols.lsns) w.u64(ts.raw());
      break;
  }
  return w.take();
}

BinlogHeader decode_binlog_header(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.raw(4) != "MBL1") throw Error(ErrorCode::kCorrupt, "not a binlog");
  if (r.u16() != BinlogHeader::kVersion) throw Error(ErrorCode::kCorrupt, "unsupported binlog version");
  BinlogHeader h;
  h.collection = r.u64();
  h.segment = r.u64();
  h.field = r.u32();
  h.rows = r.u64();
  h.min_lsn = HlcTimestamp::from_raw(r.u64());
  h.max_lsn = HlcTimestamp::from_raw(r.u64());
  return h;
}

BinlogHeader decode_binlog(const Schema& schema, std::span<const std::uint8_t> bytes,
                           SegmentColumns& cols) {
  auto h = decode_binlog_header(bytes);
  ByteReader r(bytes);
  r.skip(BinlogHeader::kSize);
  const auto ref = resolve(schema, h.field);
  const auto rows = h.rows;
  switch (ref.kind) {
    case ColumnKind::kPk:
      cols.pks.clear();
      for (std::uint64_t i = 0; i < rows; ++i) {
        if (schema.pk_type == PkType::kInt64) {
          cols.pks.emplace_back(r.i64());
        } else {
          cols.pks.emplace_back(r.str());
        }
      }
      break;
    case ColumnKind::kVector: {
      auto& v = cols.vectors[ref.index];
      const std::uint64_t n = rows * schema.vector_fields[ref.index].dim;
      if (r.remaining() != n * 4) throw Error(ErrorCode::kCorrupt, "vector binlog size mismatch");
      v.resize(n);
      r.f32s(v);
      break;
    }
    case ColumnKind::kLabel: {
      auto& col = cols.labels[ref.index];
      col.clear();
      for (std::uint64_t i = 0; i < rows; ++i) col.push_back(r.str());
      break;
    }
    case ColumnKind::kNumeric: {
      auto& col = cols.numerics[ref.index];
      col.clear();
      const bool is_int = schema.numeric_fields[ref.index].type == NumericType::kInt64;
      for (std::uint64_t i = 0; i < rows; ++i) {
        if (is_int) {
          col.emplace_back(r.i64());
        } else {
          col.emplace_back(r.f32());
        }
      }
      break;
    }
    case ColumnKind::kLsn:
      cols.lsns.clear();
      for (std::uint64_t i = 0; i < rows; ++i) cols.lsns.push_back(HlcTimestamp::from_raw(r.u64()));
      break;
  }
  if (!r.done()) throw Error(ErrorCode::kCorrupt, "trailing bytes in binlog");
  return h;
}

std::map<std::uint32_t, std::string> write_segment_binlogs(ObjectStore& store, const Schema& schema,
                                                           CollectionId collection,
                                                           SegmentId segment,
                                                           const SegmentColumns& cols) {
  std::map<std::uint32_t, std::string> keys;
  for (auto field : all_fields(schema)) {
    const auto key = segment_key(collection, segment, binlog_kind(field));
    const auto bytes = encode_binlog(schema, collection, segment, field, cols);
    with_retries(3, [&] { store.put(key, bytes); });
    keys[field] = key;
  }
  return keys;
}

SegmentColumns read_segment_binlogs(const ObjectStore& store, const Schema& schema,
                                    const SegmentDescriptor& desc) {
  auto cols = SegmentColumns::empty_for(schema);
  for (auto field : all_fields(schema)) {
    auto it = desc.binlog_paths.find(field);
    if (it == desc.binlog_paths.end()) {
      throw Error(ErrorCode::kNotFound, "segment " + std::to_string(desc.segment_id) +
                                            " has no binlog for field " + std::to_string(field));
    }
    const auto bytes = store.get(it->second);
    auto h = decode_binlog(schema, bytes, cols);
    if (h.segment != desc.segment_id || h.rows != desc.row_count) {
      throw Error(ErrorCode::kCorrupt, "binlog " + it->second + " does not match its descriptor");
    }
  }
  return cols;
}

std::vector<float> read_vector_column(const ObjectStore& store, const Schema& schema,
                                      const SegmentDescriptor& desc, std::size_t vector_field) {
  auto cols = SegmentColumns::empty_for(schema);
  const auto field = schema.vector_field_id(vector_field);
  auto it = desc.binlog_paths.find(field);
  if (it == desc.binlog_paths.end()) throw Error(ErrorCode::kNotFound, "no vector binlog");
  decode_binlog(schema, store.get(it->second), cols);
  return std::move(cols.vectors[vector_field]);
}

}  // namespace logvec
