#include "logvec/index/ivf.hpp"

#include <algorithm>
#include <numeric>

#include "logvec/core/error.hpp"

namespace logvec {

std::unique_ptr<IvfFlatIndex> IvfFlatIndex::build(Metric metric, std::span<const float> data,
                                                  std::size_t dim, std::uint32_t nlist,
                                                  std::uint32_t max_iters, std::uint64_t seed,
                                                  Quantization quantization, BuildStats* stats) {
  const std::size_t n = data.size() / dim;
  if (nlist > n) {
    throw Error(ErrorCode::kInvalidArgument, "nlist " + std::to_string(nlist) + " exceeds " +
                                                 std::to_string(n) + " rows");
  }
  auto km = kmeans(data, dim, nlist, max_iters, seed);
  std::unique_ptr<IvfFlatIndex> index(new IvfFlatIndex(metric, dim));
  if (quantization == Quantization::kSq8) index->codec_ = Sq8Codec::train(data, dim);
  index->centroids_ = std::move(km.centroids);
  index->objective_history_ = std::move(km.objective_history);
  index->lists_.resize(nlist);
  for (auto& list : index->lists_) list.vectors = VectorStore(dim, index->codec_);
  for (std::size_t i = 0; i < n; ++i) {
    auto& list = index->lists_[km.assign[i]];
    list.ids.push_back(static_cast<std::uint32_t>(i));
    list.vectors.append(data.subspan(i * dim, dim));
  }
  index->size_ = n;
  if (stats) stats->distance_evals += km.distance_evals;
  return index;
}

std::vector<Neighbor> IvfFlatIndex::search(std::span<const float> query, std::size_t k,
                                           const SearchKnobs& knobs, const RowFilter& filter,
                                           kernels::ScanStats* stats) const {
  if (query.size() != dim_) throw Error(ErrorCode::kDimensionMismatch, "ivf query");
  const std::size_t nl = lists_.size();
  if (nl == 0 || k == 0) return {};
  const std::size_t nprobe = std::clamp<std::size_t>(knobs.nprobe, 1, nl);

  // Insertion into a short sorted probe list; nprobe is small.
  thread_local std::vector<std::pair<double, std::uint32_t>> probes;
  probes.clear();
  for (std::size_t c = 0; c < nl; ++c) {
    const std::pair<double, std::uint32_t> cand{
        kernels::squared_l2(query.data(), centroids_.data() + c * dim_, dim_),
        static_cast<std::uint32_t>(c)};
    if (probes.size() == nprobe && !(cand < probes.back())) continue;
    if (probes.size() == nprobe) probes.pop_back();
    probes.insert(std::upper_bound(probes.begin(), probes.end(), cand), cand);
  }
  if (stats) stats->distance_evals += nl;

  TopK top(metric_, k);
  for (const auto& probe : probes) {
    const auto& list = lists_[probe.second];
    if (list.ids.empty()) continue;
    kernels::serial::scan_into(metric_, query, list.vectors.source(list.ids), filter, top, stats);
  }
  return top.take_sorted();
}

void IvfFlatIndex::serialize_body(ByteWriter& w) const {
  w.u32(static_cast<std::uint32_t>(lists_.size()));
  w.u64(size_);
  w.u8(codec_ ? 1 : 0);
  if (codec_) codec_->serialize(w);
  w.f32s(centroids_);
  for (const auto& list : lists_) {
    w.u64(list.ids.size());
    for (auto id : list.ids) w.u32(id);
    list.vectors.serialize(w);
  }
}

std::unique_ptr<IvfFlatIndex> IvfFlatIndex::deserialize(ByteReader& r, Metric metric,
                                                        std::size_t dim) {
  std::unique_ptr<IvfFlatIndex> index(new IvfFlatIndex(metric, dim));
  const std::size_t nlist = r.u32();
  index->size_ = r.u64();
  if (r.u8()) index->codec_ = Sq8Codec::deserialize(r);
  index->centroids_.resize(nlist * dim);
  r.f32s(index->centroids_);
  index->lists_.resize(nlist);
  for (auto& list : index->lists_) {
    list.ids.resize(r.u64());
    for (auto& id : list.ids) id = r.u32();
    list.vectors = VectorStore::deserialize(r, dim, index->codec_);
  }
  return index;
}

}  // namespace logvec
