#include "logvec/write/hash_ring.hpp"

#include <algorithm>

#include "logvec/core/collection.hpp"
#include "logvec/core/error.hpp"

namespace logvec {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

ShardId shard_of(const PrimaryKey& pk, std::uint32_t shards) {
  if (shards == 0) throw Error(ErrorCode::kInvalidArgument, "zero shards");
  return static_cast<ShardId>(pk_hash(pk) % shards);
}

HashRing::HashRing(std::uint32_t buckets) : owner_(buckets, 0) {
  if (buckets == 0) throw Error(ErrorCode::kInvalidArgument, "ring needs buckets");
}

void HashRing::add_logger(LoggerId id) {
  if (std::find(loggers_.begin(), loggers_.end(), id) != loggers_.end()) return;
  loggers_.push_back(id);
  for (std::uint32_t v = 0; v < kVirtualNodes; ++v) {
    points_[mix((std::uint64_t{id} << 32) | v)] = id;
  }
  reassign();
}

void HashRing::remove_logger(LoggerId id) {
  auto it = std::find(loggers_.begin(), loggers_.end(), id);
  if (it == loggers_.end()) return;
  loggers_.erase(it);
  std::erase_if(points_, [id](const auto& p) { return p.second == id; });
  reassign();
}

void HashRing::reassign() {
  if (points_.empty()) return;
  const std::uint64_t step = ~std::uint64_t{0} / owner_.size();
  for (std::size_t b = 0; b < owner_.size(); ++b) {
    auto it = points_.lower_bound(b * step);
    if (it == points_.end()) it = points_.begin();
    owner_[b] = it->second;
  }
}

LoggerId HashRing::owner_of_bucket(std::uint32_t bucket) const {
  if (empty()) throw Error(ErrorCode::kUnavailable, "hash ring has no loggers");
  return owner_.at(bucket);
}

std::uint32_t HashRing::bucket_of_shard(CollectionId collection, ShardId shard) const {
  return static_cast<std::uint32_t>(mix(mix(collection) ^ shard) % owner_.size());
}

LoggerId HashRing::owner_of_shard(CollectionId collection, ShardId shard) const {
  return owner_of_bucket(bucket_of_shard(collection, shard));
}

Route HashRing::route(CollectionId collection, std::uint32_t shards, const PrimaryKey& pk) const {
  if (empty()) throw Error(ErrorCode::kUnavailable, "hash ring has no loggers");
  Route r;
  r.shard = shard_of(pk, shards);
  r.channel = wal_channel_name(collection, r.shard);
  r.logger = owner_of_shard(collection, r.shard);
  return r;
}

}  // namespace logvec
