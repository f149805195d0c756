#pragma once

#include "logvec/index/vector_index.hpp"

namespace logvec {

// Exact search over every row.
class FlatIndex final : public VectorIndex {
 public:
  FlatIndex(Metric metric, std::size_t dim, std::optional<Sq8Codec> codec = std::nullopt)
      : VectorIndex(metric, dim), store_(dim, std::move(codec)) {}

  static std::unique_ptr<FlatIndex> build(Metric metric, std::span<const float> data,
                                          std::size_t dim, Quantization quantization);

  IndexKind kind() const override { return IndexKind::kFlat; }
  std::size_t size() const override { return store_.size(); }
  const VectorStore& vectors() const { return store_; }
  std::vector<Neighbor> search(std::span<const float> query, std::size_t k,
                               const SearchKnobs& knobs, const RowFilter& filter,
                               kernels::ScanStats* stats = nullptr) const override;

  static std::unique_ptr<FlatIndex> deserialize(ByteReader& r, Metric metric, std::size_t dim);

 protected:
  void serialize_body(ByteWriter& w) const override;

 private:
  VectorStore store_;
};

}  // namespace logvec
