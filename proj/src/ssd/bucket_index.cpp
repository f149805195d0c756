#include "logvec/ssd/bucket_index.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

#include "logvec/core/error.hpp"
#include "logvec/index/flat.hpp"
#include "logvec/index/kmeans.hpp"

namespace logvec {

namespace {

struct Cluster {
  std::vector<std::uint32_t> rows;
};

std::vector<float> gather(std::span<const float> data, std::size_t dim,
                          const std::vector<std::uint32_t>& rows) {
  std::vector<float> out(rows.size() * dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(rows[i] * dim), dim,
                out.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return out;
}

std::vector<float> mean_of(std::span<const float> data, std::size_t dim,
                           const std::vector<std::uint32_t>& rows) {
  std::vector<double> acc(dim, 0.0);
  for (auto r : rows) {
    for (std::size_t d = 0; d < dim; ++d) acc[d] += data[r * dim + d];
  }
  std::vector<float> out(dim);
  for (std::size_t d = 0; d < dim; ++d) out[d] = static_cast<float>(acc[d] / rows.size());
  return out;
}

// Binary splits until every cluster fits; a split k-means cannot separate
// (duplicate vectors) falls back to halving by position.
void split_until_fits(std::span<const float> data, std::size_t dim, Cluster cluster,
                      std::size_t max_members, std::uint64_t& seed, std::uint32_t iters,
                      std::vector<Cluster>& out) {
  if (cluster.rows.size() <= max_members) {
    out.push_back(std::move(cluster));
    return;
  }
  auto sub = gather(data, dim, cluster.rows);
  auto km = kmeans(sub, dim, 2, iters, seed++);
  Cluster a, b;
  for (std::size_t i = 0; i < cluster.rows.size(); ++i) {
    (km.assign[i] == 0 ? a : b).rows.push_back(cluster.rows[i]);
  }
  if (a.rows.empty() || b.rows.empty()) {
    a.rows.assign(cluster.rows.begin(), cluster.rows.begin() + cluster.rows.size() / 2);
    b.rows.assign(cluster.rows.begin() + cluster.rows.size() / 2, cluster.rows.end());
  }
  split_until_fits(data, dim, std::move(a), max_members, seed, iters, out);
  split_until_fits(data, dim, std::move(b), max_members, seed, iters, out);
}

std::string centers_key(const std::string& key) { return key + ".centers"; }

}  // namespace

BucketIndex BucketIndex::build(ObjectStore& store, const std::string& key, Metric metric,
                               std::span<const float> data, std::size_t dim,
                               const BucketBuildOptions& options) {
  if (options.replicas == 0) throw Error(ErrorCode::kConfig, "bucket index needs at least one replica");
  if (options.bucket_cap == 0 || options.bucket_cap % 4096 != 0) {
    throw Error(ErrorCode::kConfig, "bucket cap must be a positive multiple of 4096");
  }
  if (dim == 0 || data.size() % dim != 0) throw Error(ErrorCode::kInvalidArgument, "bad vector data");
  const std::size_t max_m = options.bucket_cap >= 2 + entry_bytes(dim) ? max_members(dim, options.bucket_cap) : 0;
  if (max_m == 0) {
    throw Error(ErrorCode::kConfig, "a single " + std::to_string(dim) +
                                        "-dim vector does not fit in a " +
                                        std::to_string(options.bucket_cap) + "-byte bucket");
  }
  const std::size_t rows = data.size() / dim;

  BucketIndex idx;
  idx.store_ = &store;
  idx.key_ = key;
  idx.metric_ = metric;
  idx.dim_ = dim;
  idx.cap_ = options.bucket_cap;
  idx.replicas_ = options.replicas;
  idx.codec_ = Sq8Codec::train(data, dim);

  std::vector<std::vector<Cluster>> per_replica(options.replicas);
  for (std::uint32_t r = 0; r < options.replicas; ++r) {
    Cluster all;
    all.rows.resize(rows);
    std::iota(all.rows.begin(), all.rows.end(), 0u);
    std::uint64_t seed = options.seed + r;
    // Each split gets its own seed drawn from a per-replica sequence.
    std::uint64_t split_seed = seed * 0x9e3779b97f4a7c15ull;
    if (rows > 0) split_until_fits(data, dim, std::move(all), max_m, split_seed, options.kmeans_iters, per_replica[r]);
  }

  std::size_t total = 0;
  for (const auto& c : per_replica) total += c.size();

  // Header: fixed fields, codec, then per-bucket descriptors.
  ByteWriter header;
  header.raw("MBK1");
  header.u32(idx.cap_);
  header.u32(idx.replicas_);
  header.u64(total);
  const auto blocks_at = header.size();
  header.u32(0);
  header.u32(static_cast<std::uint32_t>(dim));
  idx.codec_.serialize(header);
  std::vector<std::vector<std::uint8_t>> blocks;
  for (std::uint32_t r = 0; r < idx.replicas_; ++r) {
    for (const auto& c : per_replica[r]) {
      ByteWriter b;
      b.u16(static_cast<std::uint16_t>(c.rows.size()));
      std::vector<std::uint8_t> code(dim);
      for (auto row : c.rows) {
        b.u64(row);
        idx.codec_.encode(data.subspan(row * dim, dim), code);
        b.bytes(code);
      }
      BucketInfo info;
      info.replica = r;
      info.members = static_cast<std::uint32_t>(c.rows.size());
      info.byte_size = static_cast<std::uint32_t>(b.size());
      b.pad_to(idx.cap_);
      blocks.push_back(b.take());
      idx.buckets_.push_back(info);
      auto m = mean_of(data, dim, c.rows);
      idx.centers_.insert(idx.centers_.end(), m.begin(), m.end());
    }
  }
  for (const auto& b : idx.buckets_) {
    header.u32(b.replica);
    header.u32(b.members);
    header.u32(b.byte_size);
  }
  const auto header_blocks = static_cast<std::uint32_t>((header.size() + idx.cap_ - 1) / idx.cap_);
  header.patch_u32(blocks_at, header_blocks);
  header.pad_to(std::size_t{header_blocks} * idx.cap_);
  ByteWriter file;
  file.bytes(header.data());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    idx.buckets_[i].offset = file.size();
    file.bytes(blocks[i]);
  }
  store.put(key, file.data());

  IndexParams cp;
  cp.kind = idx.buckets_.size() >= kCenterIndexHnswThreshold ? IndexKind::kHnsw : IndexKind::kFlat;
  idx.center_index_ = build_index(cp, Metric::kEuclidean, idx.centers_, dim);
  store.put(centers_key(key), serialize_index(*idx.center_index_, cp));
  return idx;
}

BucketIndex BucketIndex::open(const ObjectStore& store, const std::string& key, Metric metric) {
  BucketIndex idx;
  idx.store_ = &store;
  idx.key_ = key;
  idx.metric_ = metric;
  auto first = store.get_range(key, 0, 4096);
  ByteReader r0(first);
  if (r0.raw(4) != "MBK1") throw Error(ErrorCode::kCorrupt, "not a bucket index");
  idx.cap_ = r0.u32();
  const auto header_len_blocks = [&] {
    ByteReader t(first);
    t.skip(4 + 4 + 4 + 8);
    return t.u32();
  }();
  auto header = store.get_range(key, 0, std::uint64_t{header_len_blocks} * idx.cap_);
  ByteReader r(header);
  r.skip(8);
  idx.replicas_ = r.u32();
  const auto total = r.u64();
  const std::uint64_t header_blocks = r.u32();
  idx.dim_ = r.u32();
  idx.codec_ = Sq8Codec::deserialize(r);
  std::uint64_t offset = header_blocks * idx.cap_;
  for (std::uint64_t i = 0; i < total; ++i) {
    BucketInfo b;
    b.replica = r.u32();
    b.members = r.u32();
    b.byte_size = r.u32();
    b.offset = offset;
    offset += idx.cap_;
    idx.buckets_.push_back(b);
  }
  auto loaded = deserialize_index(store.get(centers_key(key)));
  idx.center_index_ = std::move(loaded.index);
  if (idx.center_index_->size() != total) throw Error(ErrorCode::kCorrupt, "center table size mismatch");
  if (const auto* flat = dynamic_cast<const FlatIndex*>(idx.center_index_.get())) {
    auto f = flat->vectors().floats();
    idx.centers_.assign(f.begin(), f.end());
  }
  return idx;
}

std::vector<std::pair<std::uint64_t, std::vector<std::uint8_t>>> BucketIndex::read_bucket(
    std::size_t bucket) const {
  const auto& info = buckets_.at(bucket);
  auto block = store_->get_range(key_, info.offset, cap_);
  ByteReader r(block);
  const auto n = r.u16();
  std::vector<std::pair<std::uint64_t, std::vector<std::uint8_t>>> out;
  out.reserve(n);
  for (std::uint16_t i = 0; i < n; ++i) {
    const auto row = r.u64();
    auto code = r.bytes(dim_);
    out.emplace_back(row, std::vector<std::uint8_t>(code.begin(), code.end()));
  }
  return out;
}

BucketSearchResult BucketIndex::search_two_stage(std::span<const float> query, std::size_t nprobe,
                                                 std::size_t k) const {
  if (query.size() != dim_) throw Error(ErrorCode::kDimensionMismatch, "query dimension mismatch");
  BucketSearchResult res;
  if (k == 0 || buckets_.empty()) return res;
  nprobe = std::min(nprobe, buckets_.size());
  SearchKnobs knobs;
  knobs.ef_search = static_cast<std::uint32_t>(std::max<std::size_t>(nprobe, 64));
  auto probes = center_index_->search(query, nprobe, knobs, RowFilter{});

  std::unordered_map<std::uint64_t, double> best;
  std::vector<float> decoded(dim_);
  for (const auto& p : probes) {
    const auto& info = buckets_[p.row];
    auto block = store_->get_range(key_, info.offset, cap_);
    res.bytes_read += cap_;
    ++res.buckets_read;
    ByteReader r(block);
    const auto n = r.u16();
    for (std::uint16_t i = 0; i < n; ++i) {
      const auto row = r.u64();
      codec_.decode(r.bytes(dim_), decoded);
      const double s = score_raw(metric_, query.data(), decoded.data(), dim_);
      auto [it, fresh] = best.emplace(row, s);
      if (!fresh && rank_key(metric_, s) < rank_key(metric_, it->second)) it->second = s;
    }
  }
  TopK top(metric_, k);
  for (const auto& [row, s] : best) top.push(static_cast<std::uint32_t>(row), s);
  res.hits = top.take_sorted();
  return res;
}

}  // namespace logvec
