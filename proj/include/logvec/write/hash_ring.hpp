#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "logvec/core/primary_key.hpp"
#include "logvec/core/segment.hpp"

namespace logvec {

using LoggerId = std::uint32_t;

struct Route {
  ShardId shard = 0;
  std::string channel;
  LoggerId logger = 0;
};

ShardId shard_of(const PrimaryKey& pk, std::uint32_t shards);

// Consistent-hash ring of loggers. The ring has a fixed number of bucket
// positions; each logger places virtual nodes on the ring and owns the
// buckets that precede them, so adding or removing a logger only moves that
// logger's buckets.
class HashRing {
 public:
  static constexpr std::uint32_t kDefaultBuckets = 256;
  static constexpr std::uint32_t kVirtualNodes = 32;

  explicit HashRing(std::uint32_t buckets = kDefaultBuckets);

  void add_logger(LoggerId id);
  void remove_logger(LoggerId id);
  bool empty() const { return loggers_.empty(); }
  const std::vector<LoggerId>& loggers() const { return loggers_; }

  std::uint32_t bucket_count() const { return static_cast<std::uint32_t>(owner_.size()); }
  LoggerId owner_of_bucket(std::uint32_t bucket) const;
  std::uint32_t bucket_of_shard(CollectionId collection, ShardId shard) const;
  LoggerId owner_of_shard(CollectionId collection, ShardId shard) const;

  Route route(CollectionId collection, std::uint32_t shards, const PrimaryKey& pk) const;

 private:
  void reassign();

  std::vector<LoggerId> loggers_;
  std::map<std::uint64_t, LoggerId> points_;
  std::vector<LoggerId> owner_;
};

}  // namespace logvec
