#include "logvec/coord/data_coord.hpp"

#include <map>

#include "logvec/write/logger.hpp"

namespace logvec {

DataCoord::DataCoord(LogBroker& broker, MetaStore& meta, WriteOptions options)
    : meta_(meta), options_(options), inbox_(broker, meta, kCoordChannel, "data-coord") {}

std::size_t DataCoord::pump() {
  return inbox_.drain([&](const LogEntry& e) { apply(e); });
}

void DataCoord::put(const SegmentDescriptor& d) {
  meta_.put(segment_meta_key(d.collection_id, d.segment_id), d.to_json().dump());
}

void DataCoord::apply(const LogEntry& e) {
  if (e.kind != EntryKind::kCoord) return;
  const auto& m = e.as_coord();
  switch (m.type) {
    case CoordType::kSegmentSealed: {
      // A replayed seal after a restart repeats a known segment; keep what we have.
      if (auto known = segment(m.collection, m.segment); known && known->sealed()) return;
      put(SegmentDescriptor::from_json(nlohmann::json::parse(m.detail)));
      return;
    }
    case CoordType::kSegmentsMerged: {
      if (segment(m.collection, m.segment)) return;
      put(SegmentDescriptor::from_json(nlohmann::json::parse(m.detail)));
      for (auto id : m.segments) {
        auto d = segment(m.collection, id);
        if (!d) continue;
        d->merged_into = m.segment;
        d->retired_at = e.timestamp;
        put(*d);
      }
      if (merge_listener_) merge_listener_(m.collection, m.segments, m.segment);
      return;
    }
    case CoordType::kIndexBuilt: {
      if (m.flag != 0) return;
      auto d = segment(m.collection, m.segment);
      if (!d) return;
      const auto j = nlohmann::json::parse(m.detail);
      d->index_paths[j.at("field").get<std::string>()] = j.at("key").get<std::string>();
      put(*d);
      return;
    }
    case CoordType::kCollectionDropped:
      for (const auto& [k, _] : meta_.list("segment/" + std::to_string(m.collection) + "/")) meta_.remove(k);
      return;
    default:
      return;
  }
}

std::vector<SegmentDescriptor> DataCoord::segments(CollectionId collection, bool include_retired) const {
  std::map<SegmentId, SegmentDescriptor> by_id;
  for (const auto& [_, v] : meta_.list("segment/" + std::to_string(collection) + "/")) {
    auto d = SegmentDescriptor::from_json(nlohmann::json::parse(v));
    if (!d.sealed() || (!include_retired && !d.live())) continue;
    by_id.emplace(d.segment_id, std::move(d));
  }
  std::vector<SegmentDescriptor> out;
  for (auto& [_, d] : by_id) out.push_back(std::move(d));
  return out;
}

std::optional<SegmentDescriptor> DataCoord::segment(CollectionId collection, SegmentId segment) const {
  auto v = meta_.get(segment_meta_key(collection, segment));
  if (!v) return std::nullopt;
  return SegmentDescriptor::from_json(nlohmann::json::parse(*v));
}

std::uint64_t DataCoord::live_rows(CollectionId collection) const {
  std::uint64_t rows = 0;
  for (const auto& d : segments(collection)) rows += d.row_count;
  return rows;
}

std::vector<std::vector<SegmentDescriptor>> DataCoord::merge_candidates(CollectionId collection) const {
  const auto limit = static_cast<std::uint64_t>(options_.merge_fraction * static_cast<double>(options_.seal_rows));
  std::map<ShardId, std::vector<SegmentDescriptor>> small;
  for (auto& d : segments(collection)) {
    if (d.row_count < limit) small[d.shard_id].push_back(std::move(d));
  }
  std::vector<std::vector<SegmentDescriptor>> out;
  for (auto& [_, group] : small) {
    if (group.size() >= options_.merge_min_segments) out.push_back(std::move(group));
  }
  return out;
}

}  // namespace logvec
