#include "logvec/core/collection.hpp"

#include "logvec/core/error.hpp"

namespace logvec {

std::string wal_channel_name(CollectionId collection, ShardId shard) {
  return "wal/" + std::to_string(collection) + "/shard-" + std::to_string(shard);
}

std::string CollectionInfo::wal_channel(ShardId shard) const { return wal_channel_name(id, shard); }

nlohmann::json CollectionInfo::to_json() const {
  return {{"id", id},
          {"name", name},
          {"schema", schema.to_json()},
          {"metric", metric_name(metric)},
          {"index", index.to_json()},
          {"shards", shards}};
}

CollectionInfo CollectionInfo::from_json(const nlohmann::json& j) {
  CollectionInfo c;
  try {
    c.id = j.value("id", CollectionId{0});
    c.name = j.at("name").get<std::string>();
    c.schema = Schema::from_json(j.at("schema"));
    c.metric = parse_metric(j.value("metric", std::string("l2")));
    if (j.contains("index")) c.index = IndexParams::from_json(j.at("index"));
    c.shards = j.value("shards", 2u);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bad collection: ") + e.what());
  }
  if (c.shards == 0) throw Error(ErrorCode::kInvalidArgument, "collection needs at least one shard");
  c.schema.check();
  c.index.check();
  return c;
}

}  // namespace logvec
