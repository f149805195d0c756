#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "logvec/core/hlc.hpp"
#include "logvec/core/schema.hpp"

namespace logvec {

using CollectionId = std::uint64_t;
using SegmentId = std::uint64_t;
using ShardId = std::uint32_t;
using NodeId = std::uint32_t;

enum class SegmentState : std::uint8_t { kGrowing = 0, kSealed = 1 };

enum class SealTrigger : std::uint8_t { kSize = 0, kInactivity = 1, kMerge = 2, kManual = 3 };

const char* seal_trigger_name(SealTrigger t);

struct SegmentDescriptor {
  SegmentId segment_id = 0;
  CollectionId collection_id = 0;
  ShardId shard_id = 0;
  SegmentState state = SegmentState::kGrowing;
  std::uint64_t row_count = 0;
  std::uint64_t byte_size = 0;
  HlcTimestamp progress;
  std::uint32_t slice_count = 0;
  std::map<std::uint32_t, std::string> binlog_paths;  // field id -> object key
  std::map<std::string, std::string> index_paths;     // vector field -> object key
  // Set when a merge replaced this segment; kept for time travel until GC.
  std::optional<SegmentId> merged_into;
  HlcTimestamp retired_at;

  bool sealed() const { return state == SegmentState::kSealed; }
  bool live() const { return !merged_into.has_value(); }

  nlohmann::json to_json() const;
  static SegmentDescriptor from_json(const nlohmann::json& j);

  friend bool operator==(const SegmentDescriptor&, const SegmentDescriptor&) = default;
};

// Column-oriented rows of one segment, in WAL order.
struct SegmentColumns {
  std::vector<PrimaryKey> pks;
  std::vector<std::vector<float>> vectors;  // per vector field, row-major
  std::vector<std::vector<std::string>> labels;
  std::vector<std::vector<NumericValue>> numerics;
  std::vector<HlcTimestamp> lsns;

  static SegmentColumns empty_for(const Schema& schema);

  std::size_t rows() const { return pks.size(); }
  void append(const Schema& schema, const Entity& e);
  Entity row(const Schema& schema, std::size_t i) const;
  std::span<const float> vector_at(const Schema& schema, std::size_t field, std::size_t row) const {
    const std::size_t dim = schema.vector_fields[field].dim;
    return std::span<const float>(vectors[field]).subspan(row * dim, dim);
  }

  friend bool operator==(const SegmentColumns&, const SegmentColumns&) = default;
};

}  // namespace logvec
