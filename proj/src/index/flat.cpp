#include "logvec/index/flat.hpp"

namespace logvec {

std::unique_ptr<FlatIndex> FlatIndex::build(Metric metric, std::span<const float> data,
                                            std::size_t dim, Quantization quantization) {
  std::optional<Sq8Codec> codec;
  if (quantization == Quantization::kSq8) codec = Sq8Codec::train(data, dim);
  auto index = std::make_unique<FlatIndex>(metric, dim, std::move(codec));
  for (std::size_t i = 0; i * dim < data.size(); ++i) index->store_.append(data.subspan(i * dim, dim));
  return index;
}

std::vector<Neighbor> FlatIndex::search(std::span<const float> query, std::size_t k,
                                        const SearchKnobs&, const RowFilter& filter,
                                        kernels::ScanStats* stats) const {
  return kernels::omp::scan_topk(metric_, query, store_.source(), k, filter, stats);
}

void FlatIndex::serialize_body(ByteWriter& w) const {
  w.u8(store_.codec() ? 1 : 0);
  if (store_.codec()) store_.codec()->serialize(w);
  store_.serialize(w);
}

std::unique_ptr<FlatIndex> FlatIndex::deserialize(ByteReader& r, Metric metric, std::size_t dim) {
  std::optional<Sq8Codec> codec;
  if (r.u8()) codec = Sq8Codec::deserialize(r);
  auto index = std::make_unique<FlatIndex>(metric, dim, codec);
  index->store_ = VectorStore::deserialize(r, dim, codec);
  return index;
}

}  // namespace logvec
