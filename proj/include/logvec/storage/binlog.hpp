#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "logvec/core/schema.hpp"
#include "logvec/core/segment.hpp"
#include "logvec/storage/object_store.hpp"

namespace logvec {

// One column of one sealed segment. Header: "MBL1", u16 version,
// u64 collection, u64 segment, u32 field, u64 rows, u64 min_lsn, u64 max_lsn.
struct BinlogHeader {
  static constexpr std::uint16_t kVersion = 1;
  static constexpr std::size_t kSize = 4 + 2 + 8 + 8 + 4 + 8 + 8 + 8;

  CollectionId collection = 0;
  SegmentId segment = 0;
  std::uint32_t field = 0;
  std::uint64_t rows = 0;
  HlcTimestamp min_lsn;
  HlcTimestamp max_lsn;
};

std::vector<std::uint8_t> encode_binlog(const Schema& schema, CollectionId collection,
                                        SegmentId segment, std::uint32_t field,
                                        const SegmentColumns& cols);
BinlogHeader decode_binlog_header(std::span<const std::uint8_t> bytes);
// Decodes one field's column into `cols` (which must be shaped by empty_for).
BinlogHeader decode_binlog(const Schema& schema, std::span<const std::uint8_t> bytes,
                           SegmentColumns& cols);

std::string binlog_kind(std::uint32_t field);

// Writes one object per field plus the lsn column; returns field -> key.
std::map<std::uint32_t, std::string> write_segment_binlogs(ObjectStore& store, const Schema& schema,
                                                           CollectionId collection,
                                                           SegmentId segment,
                                                           const SegmentColumns& cols);
SegmentColumns read_segment_binlogs(const ObjectStore& store, const Schema& schema,
                                    const SegmentDescriptor& desc);
// Reads only the named vector column: what an index build needs.
std::vector<float> read_vector_column(const ObjectStore& store, const Schema& schema,
                                      const SegmentDescriptor& desc, std::size_t vector_field);

}  // namespace logvec
