#include "logvec/coord/root_coord.hpp"

#include "logvec/core/error.hpp"

namespace logvec {

namespace {
std::string info_key(CollectionId id) { return "collection/" + std::to_string(id); }
std::string name_key(const std::string& name) { return "collection-name/" + name; }
}  // namespace

RootCoord::RootCoord(LogBroker& broker, Tso& tso, MetaStore& meta) : broker_(broker), tso_(tso), meta_(meta) {
  broker_.create_channel(kDdlChannel);
  broker_.create_channel(kCoordChannel);
}

CollectionInfo RootCoord::create_collection(CollectionInfo proto) {
  if (proto.name.empty()) throw Error(ErrorCode::kInvalidArgument, "collection name is empty");
  if (meta_.get(name_key(proto.name))) {
    throw Error(ErrorCode::kAlreadyExists, "collection '" + proto.name + "' already exists");
  }
  if (proto.shards == 0) throw Error(ErrorCode::kInvalidArgument, "a collection needs at least one shard");
  proto.schema.check();
  proto.index.check();
  proto.id = meta_.next_id("collection");
  // Round-trip once so anything from_json rejects is rejected before it is durable.
  auto info = CollectionInfo::from_json(proto.to_json());
  meta_.put(info_key(info.id), info.to_json().dump());
  meta_.put(name_key(info.name), std::to_string(info.id));
  for (ShardId s = 0; s < info.shards; ++s) broker_.create_channel(info.wal_channel(s));

  DdlRecord d;
  d.op = DdlOp::kCreateCollection;
  d.collection = info.id;
  d.name = info.name;
  d.body = info.to_json().dump();
  publish_stamped(broker_, tso_, kDdlChannel, LogEntry::ddl({}, d));
  return info;
}

CollectionInfo RootCoord::drop_collection(const std::string& name) {
  auto info = find(name);
  if (!info) throw Error(ErrorCode::kNotFound, "collection '" + name + "' does not exist");
  meta_.remove(info_key(info->id));
  meta_.remove(name_key(name));

  DdlRecord d;
  d.op = DdlOp::kDropCollection;
  d.collection = info->id;
  d.name = name;
  publish_stamped(broker_, tso_, kDdlChannel, LogEntry::ddl({}, d));
  CoordMessage m;
  m.type = CoordType::kCollectionDropped;
  m.collection = info->id;
  publish_stamped(broker_, tso_, kCoordChannel, LogEntry::coord({}, m));
  return *info;
}

std::optional<CollectionInfo> RootCoord::find(const std::string& name) const {
  auto id = meta_.get(name_key(name));
  if (!id) return std::nullopt;
  return get(std::stoull(*id));
}

std::optional<CollectionInfo> RootCoord::get(CollectionId id) const {
  auto body = meta_.get(info_key(id));
  if (!body) return std::nullopt;
  return CollectionInfo::from_json(nlohmann::json::parse(*body));
}

std::vector<CollectionInfo> RootCoord::list() const {
  std::vector<CollectionInfo> out;
  for (const auto& [_, v] : meta_.list("collection/")) out.push_back(CollectionInfo::from_json(nlohmann::json::parse(v)));
  return out;
}

}  // namespace logvec
