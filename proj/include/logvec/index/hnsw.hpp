#pragma once

#include <random>

#include "logvec/index/vector_index.hpp"

namespace logvec {

// Hierarchical navigable small-world graph. Rows are inserted in id order
// with levels drawn from a seeded generator, so a build is reproducible.
// Deleted rows stay in the graph and are traversed; they are only kept out of
// the result set.
class HnswIndex final : public VectorIndex {
 public:
  static std::unique_ptr<HnswIndex> build(Metric metric, std::span<const float> data,
                                          std::size_t dim, std::uint32_t M,
                                          std::uint32_t ef_construction, std::uint64_t seed,
                                          BuildStats* stats = nullptr);

  IndexKind kind() const override { return IndexKind::kHnsw; }
  std::size_t size() const override { return levels_.size(); }
  std::vector<Neighbor> search(std::span<const float> query, std::size_t k,
                               const SearchKnobs& knobs, const RowFilter& filter,
                               kernels::ScanStats* stats = nullptr) const override;

  std::uint32_t M() const { return M_; }
  int max_level() const { return max_level_; }
  std::uint32_t entry_point() const { return entry_point_; }
  // Neighbors of `row` at `level`.
  const std::vector<std::uint32_t>& links(std::uint32_t row, int level) const {
    return links_[row][static_cast<std::size_t>(level)];
  }
  int level_of(std::uint32_t row) const { return levels_[row]; }

  static std::unique_ptr<HnswIndex> deserialize(ByteReader& r, Metric metric, std::size_t dim);

 protected:
  void serialize_body(ByteWriter& w) const override;

 private:
  struct Candidate {
    double key;
    std::uint32_t id;
    bool operator<(const Candidate& o) const { return key != o.key ? key < o.key : id < o.id; }
    bool operator>(const Candidate& o) const { return o < *this; }
  };

  HnswIndex(Metric metric, std::size_t dim) : VectorIndex(metric, dim) {}

  double key(const float* a, const float* b, std::uint64_t& evals) const;
  const float* vec(std::uint32_t id) const { return data_.data() + std::size_t{id} * dim_; }
  void insert(std::uint32_t id, int level, std::uint64_t& evals);
  std::uint32_t greedy(const float* q, std::uint32_t ep, int from_level, int to_level,
                       std::uint64_t& evals) const;
  // Best-first beam search on one layer. Only admitted rows enter the result
  // set; every reachable row may be expanded.
  std::vector<Candidate> search_layer(const float* q, std::uint32_t ep, std::size_t ef, int level,
                                      const RowFilter* filter, std::uint64_t& evals) const;
  std::vector<std::uint32_t> select_neighbors(const float* base, std::vector<Candidate> candidates,
                                              std::size_t m, std::uint64_t& evals) const;

  std::uint32_t M_ = 16;
  std::uint32_t M0_ = 32;
  std::uint32_t ef_construction_ = 200;
  std::vector<float> data_;
  std::vector<int> levels_;
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;
  std::uint32_t entry_point_ = 0;
  int max_level_ = -1;
};

}  // namespace logvec
