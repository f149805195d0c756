#include "logvec/index/segment_search.hpp"

#include <algorithm>

namespace logvec {

std::vector<Neighbor> segment_search(const SegmentSearchInput& input, std::span<const float> query,
                                     Metric metric, std::size_t k, kernels::ScanStats* stats) {
  if (k == 0) return {};
  const RowFilter deletions{input.deleted, nullptr};
  const bool use_index = input.index != nullptr && input.index->metric() == metric;
  const std::size_t rows = input.dim ? input.vectors.size() / input.dim : 0;
  const std::size_t total = use_index ? std::max(rows, input.index->size()) : rows;

  auto fetch_candidates = [&](std::size_t fetch) {
    if (use_index) return input.index->search(query, fetch, input.knobs, deletions, stats);
    kernels::RowSource src;
    src.floats = input.vectors;
    src.dim = input.dim;
    return kernels::omp::scan_topk(metric, query, src, fetch, deletions, stats);
  };

  if (!input.filter) return fetch_candidates(k);

  // Post-filter. A short candidate list means the source is exhausted;
  // otherwise too few survivors widen the fetch until k pass or every row
  // has been considered.
  std::size_t fetch = k * std::max<std::size_t>(1, input.oversample);
  while (true) {
    auto candidates = fetch_candidates(fetch);
    const bool exhausted = candidates.size() < fetch || fetch >= total;
    std::erase_if(candidates, [&](const Neighbor& n) { return !(*input.filter)(n.row); });
    if (candidates.size() >= k || exhausted) {
      if (candidates.size() > k) candidates.resize(k);
      return candidates;
    }
    fetch *= 2;
  }
}

std::unique_ptr<IvfFlatIndex> build_temp_index(std::span<const float> slice_vectors,
                                               std::size_t dim, Metric metric,
                                               std::uint32_t nlist, std::uint64_t seed) {
  const std::size_t rows = slice_vectors.size() / dim;
  nlist = static_cast<std::uint32_t>(std::min<std::size_t>(nlist, rows));
  return IvfFlatIndex::build(metric, slice_vectors, dim, nlist, 10, seed, Quantization::kNone);
}

}  // namespace logvec
