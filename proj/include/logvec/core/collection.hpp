#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "logvec/core/metric.hpp"
#include "logvec/core/schema.hpp"
#include "logvec/core/segment.hpp"
#include "logvec/index/vector_index.hpp"

namespace logvec {

struct CollectionInfo {
  CollectionId id = 0;
  std::string name;
  Schema schema;
  Metric metric = Metric::kEuclidean;
  IndexParams index;
  std::uint32_t shards = 2;

  std::string wal_channel(ShardId shard) const;

  nlohmann::json to_json() const;
  static CollectionInfo from_json(const nlohmann::json& j);
};

std::string wal_channel_name(CollectionId collection, ShardId shard);

inline constexpr const char* kDdlChannel = "ddl";
inline constexpr const char* kCoordChannel = "coord";

}  // namespace logvec
