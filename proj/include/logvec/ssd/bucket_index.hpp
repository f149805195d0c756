#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "logvec/core/metric.hpp"
#include "logvec/core/topk.hpp"
#include "logvec/index/sq8.hpp"
#include "logvec/index/vector_index.hpp"
#include "logvec/storage/object_store.hpp"

namespace logvec {

inline constexpr std::uint32_t kBucketCap = 4096;

struct BucketBuildOptions {
  std::uint32_t bucket_cap = kBucketCap;  // a multiple of 4096 for large vectors
  std::uint32_t replicas = 1;
  std::uint64_t seed = 42;
  std::uint32_t kmeans_iters = 10;
};

// Where a bucket lives and what it holds; kept in memory next to the
// center index.
struct BucketInfo {
  std::uint32_t replica = 0;
  std::uint64_t offset = 0;  // byte offset in the bucket file
  std::uint32_t members = 0;
  std::uint32_t byte_size = 0;  // count prefix plus member entries, before padding
};

struct BucketSearchResult {
  std::vector<Neighbor> hits;
  std::uint64_t bytes_read = 0;
  std::uint32_t buckets_read = 0;
};

// Disk-resident index: SQ8 codes packed into block-aligned buckets no larger
// than bucket_cap, found through an in-memory index over bucket centers.
// Each replica is an independent hierarchical clustering of all rows.
//
// Bucket file: a header block ("MBK1", u32 cap, u32 replicas, u64 buckets,
// u32 header blocks, codec, per-bucket replica/members/byte size), then one
// block per bucket: u16 member count, (u64 row, dim code bytes) per member,
// zero padding to cap. Centers are stored as a FLAT index object next to it.
class BucketIndex {
 public:
  static constexpr std::size_t kCenterIndexHnswThreshold = 100'000;

  static BucketIndex build(ObjectStore& store, const std::string& key, Metric metric,
                           std::span<const float> data, std::size_t dim,
                           const BucketBuildOptions& options);
  static BucketIndex open(const ObjectStore& store, const std::string& key, Metric metric);

  // Stage 1 picks the nprobe nearest centers across all replicas; stage 2
  // reads those buckets, scores decoded codes and keeps each row once.
  BucketSearchResult search_two_stage(std::span<const float> query, std::size_t nprobe,
                                      std::size_t k) const;

  std::size_t dim() const { return dim_; }
  std::uint32_t bucket_cap() const { return cap_; }
  std::uint32_t replicas() const { return replicas_; }
  std::size_t bucket_count() const { return buckets_.size(); }
  const std::vector<BucketInfo>& buckets() const { return buckets_; }
  const Sq8Codec& codec() const { return codec_; }
  std::span<const float> center(std::size_t bucket) const {
    return std::span<const float>(centers_).subspan(bucket * dim_, dim_);
  }
  // Decoded rows of one bucket, read from disk.
  std::vector<std::pair<std::uint64_t, std::vector<std::uint8_t>>> read_bucket(std::size_t bucket) const;

  static std::size_t entry_bytes(std::size_t dim) { return 8 + dim; }
  static std::size_t max_members(std::size_t dim, std::uint32_t cap) {
    return (cap - 2) / entry_bytes(dim);
  }

 private:
  const ObjectStore* store_ = nullptr;
  std::string key_;
  Metric metric_ = Metric::kEuclidean;
  std::size_t dim_ = 0;
  std::uint32_t cap_ = kBucketCap;
  std::uint32_t replicas_ = 1;
  Sq8Codec codec_;
  std::vector<BucketInfo> buckets_;
  std::vector<float> centers_;
  std::unique_ptr<VectorIndex> center_index_;
};

}  // namespace logvec
