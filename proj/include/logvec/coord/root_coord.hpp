#pragma once

#include <optional>
#include <string>
#include <vector>

#include "logvec/core/collection.hpp"
#include "logvec/log/broker.hpp"
#include "logvec/storage/metastore.hpp"

namespace logvec {

// Owner of collection metadata. Creates and drops collections, persisting
// them in the MetaStore before announcing them on the ddl channel.
class RootCoord {
 public:
  RootCoord(LogBroker& broker, Tso& tso, MetaStore& meta);

  // `proto` carries name, schema, metric, index parameters and shard count;
  // the id is assigned here. Throws kAlreadyExists for a taken name.
  CollectionInfo create_collection(CollectionInfo proto);
  // Throws kNotFound for an unknown name.
  CollectionInfo drop_collection(const std::string& name);

  std::optional<CollectionInfo> find(const std::string& name) const;
  std::optional<CollectionInfo> get(CollectionId id) const;
  std::vector<CollectionInfo> list() const;

 private:
  LogBroker& broker_;
  Tso& tso_;
  MetaStore& meta_;
};

}  // namespace logvec
