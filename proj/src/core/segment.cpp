#include "logvec/core/segment.hpp"

#include "logvec/core/error.hpp"

namespace logvec {

const char* seal_trigger_name(SealTrigger t) {
  switch (t) {
    case SealTrigger::kSize: return "size";
    case SealTrigger::kInactivity: return "inactivity";
    case SealTrigger::kMerge: return "merge";
    case SealTrigger::kManual: return "manual";
  }
  return "?";
}

nlohmann::json SegmentDescriptor::to_json() const {
  nlohmann::json j;
  j["segment_id"] = segment_id;
  j["collection_id"] = collection_id;
  j["shard_id"] = shard_id;
  j["state"] = state == SegmentState::kSealed ? "sealed" : "growing";
  j["row_count"] = row_count;
  j["byte_size"] = byte_size;
  j["progress"] = progress.raw();
  j["slice_count"] = slice_count;
  nlohmann::json binlogs = nlohmann::json::object();
  for (const auto& [field, key] : binlog_paths) binlogs[std::to_string(field)] = key;
  j["binlog_paths"] = binlogs;
  j["index_paths"] = index_paths;
  if (merged_into) {
    j["merged_into"] = *merged_into;
    j["retired_at"] = retired_at.raw();
  }
  return j;
}

SegmentDescriptor SegmentDescriptor::from_json(const nlohmann::json& j) {
  SegmentDescriptor d;
  try {
    d.segment_id = j.at("segment_id").get<SegmentId>();
    d.collection_id = j.at("collection_id").get<CollectionId>();
    d.shard_id = j.at("shard_id").get<ShardId>();
    d.state = j.at("state").get<std::string>() == "sealed" ? SegmentState::kSealed
                                                          : SegmentState::kGrowing;
    d.row_count = j.at("row_count").get<std::uint64_t>();
    d.byte_size = j.at("byte_size").get<std::uint64_t>();
    d.progress = HlcTimestamp::from_raw(j.at("progress").get<std::uint64_t>());
    d.slice_count = j.at("slice_count").get<std::uint32_t>();
    for (const auto& [field, key] : j.at("binlog_paths").items()) {
      d.binlog_paths[static_cast<std::uint32_t>(std::stoul(field))] = key.get<std::string>();
    }
    d.index_paths = j.at("index_paths").get<std::map<std::string, std::string>>();
    if (j.contains("merged_into")) {
      d.merged_into = j.at("merged_into").get<SegmentId>();
      d.retired_at = HlcTimestamp::from_raw(j.at("retired_at").get<std::uint64_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorrupt, std::string("bad segment descriptor: ") + e.what());
  }
  return d;
}

SegmentColumns SegmentColumns::empty_for(const Schema& schema) {
  SegmentColumns c;
  c.vectors.resize(schema.vector_fields.size());
  c.labels.resize(schema.label_fields.size());
  c.numerics.resize(schema.numeric_fields.size());
  return c;
}

void SegmentColumns::append(const Schema& schema, const Entity& e) {
  if (!e.pk) throw Error(ErrorCode::kInvalidArgument, "row without primary key");
  pks.push_back(*e.pk);
  for (std::size_t f = 0; f < schema.vector_fields.size(); ++f) {
    vectors[f].insert(vectors[f].end(), e.vectors[f].begin(), e.vectors[f].end());
  }
  for (std::size_t f = 0; f < schema.label_fields.size(); ++f) labels[f].push_back(e.labels[f]);
  for (std::size_t f = 0; f < schema.numeric_fields.size(); ++f) {
    numerics[f].push_back(e.numerics[f]);
  }
  lsns.push_back(e.lsn);
}

Entity SegmentColumns::row(const Schema& schema, std::size_t i) const {
  Entity e;
  e.pk = pks.at(i);
  for (std::size_t f = 0; f < schema.vector_fields.size(); ++f) {
    auto v = vector_at(schema, f, i);
    e.vectors.emplace_back(v.begin(), v.end());
  }
  for (const auto& col : labels) e.labels.push_back(col[i]);
  for (const auto& col : numerics) e.numerics.push_back(col[i]);
  e.lsn = lsns[i];
  return e;
}

}  // namespace logvec
