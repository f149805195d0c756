#pragma once

#include "logvec/index/kmeans.hpp"
#include "logvec/index/vector_index.hpp"

namespace logvec {

// Inverted file over k-means clusters. Each row lives in exactly one list;
// a query scans the lists of its nprobe nearest centroids.
class IvfFlatIndex final : public VectorIndex {
 public:
  struct List {
    std::vector<std::uint32_t> ids;
    VectorStore vectors;
  };

  static std::unique_ptr<IvfFlatIndex> build(Metric metric, std::span<const float> data,
                                             std::size_t dim, std::uint32_t nlist,
                                             std::uint32_t max_iters, std::uint64_t seed,
                                             Quantization quantization,
                                             BuildStats* stats = nullptr);

  IndexKind kind() const override { return IndexKind::kIvfFlat; }
  std::size_t size() const override { return size_; }
  std::vector<Neighbor> search(std::span<const float> query, std::size_t k,
                               const SearchKnobs& knobs, const RowFilter& filter,
                               kernels::ScanStats* stats = nullptr) const override;

  std::uint32_t nlist() const { return static_cast<std::uint32_t>(lists_.size()); }
  const std::vector<float>& centroids() const { return centroids_; }
  const std::vector<List>& lists() const { return lists_; }
  const std::vector<double>& objective_history() const { return objective_history_; }

  static std::unique_ptr<IvfFlatIndex> deserialize(ByteReader& r, Metric metric, std::size_t dim);

 protected:
  void serialize_body(ByteWriter& w) const override;

 private:
  IvfFlatIndex(Metric metric, std::size_t dim) : VectorIndex(metric, dim) {}

  std::vector<float> centroids_;
  std::vector<List> lists_;
  std::optional<Sq8Codec> codec_;
  std::size_t size_ = 0;
  std::vector<double> objective_history_;
};

}  // namespace logvec
