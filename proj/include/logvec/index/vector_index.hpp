#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "logvec/core/bytes.hpp"
#include "logvec/core/metric.hpp"
#include "logvec/core/topk.hpp"
#include "logvec/index/bitmap.hpp"
#include "logvec/index/sq8.hpp"
#include "logvec/kernels/scan.hpp"

namespace logvec {

enum class IndexKind : std::uint8_t { kFlat = 0, kIvfFlat = 1, kHnsw = 2 };
enum class Quantization : std::uint8_t { kNone = 0, kSq8 = 1 };

const char* index_kind_name(IndexKind kind);
IndexKind parse_index_kind(const std::string& name);

struct SearchKnobs {
  std::uint32_t nprobe = 8;
  std::uint32_t ef_search = 64;
};

struct IndexParams {
  IndexKind kind = IndexKind::kFlat;
  Quantization quantization = Quantization::kNone;
  std::uint32_t nlist = 64;
  std::uint32_t max_iters = 25;
  std::uint32_t M = 16;
  std::uint32_t ef_construction = 200;
  std::uint64_t seed = 42;
  SearchKnobs search;

  // Rejects combinations that cannot be built (nprobe outside [1, nlist],
  // M < 2, quantized HNSW).
  void check() const;

  nlohmann::json to_json() const;
  static IndexParams from_json(const nlohmann::json& j);

  friend bool operator==(const IndexParams&, const IndexParams&) = default;
};

inline bool operator==(const SearchKnobs& a, const SearchKnobs& b) {
  return a.nprobe == b.nprobe && a.ef_search == b.ef_search;
}

struct BuildStats {
  std::uint64_t distance_evals = 0;
};

// Immutable per-segment vector index. Row ids are positions in the vector
// column it was built from.
class VectorIndex {
 public:
  VectorIndex(Metric metric, std::size_t dim) : metric_(metric), dim_(dim) {}
  virtual ~VectorIndex() = default;

  virtual IndexKind kind() const = 0;
  virtual std::size_t size() const = 0;

  // Up to k admitted rows, best first, ties by ascending row id.
  virtual std::vector<Neighbor> search(std::span<const float> query, std::size_t k,
                                       const SearchKnobs& knobs, const RowFilter& filter,
                                       kernels::ScanStats* stats = nullptr) const = 0;

  Metric metric() const { return metric_; }
  std::size_t dim() const { return dim_; }

 protected:
  virtual void serialize_body(ByteWriter& w) const = 0;
  friend std::vector<std::uint8_t> serialize_index(const VectorIndex& index,
                                                   const IndexParams& params);

  Metric metric_;
  std::size_t dim_;
};

// Float or SQ8-coded row storage shared by FLAT and IVF lists.
class VectorStore {
 public:
  VectorStore() = default;
  VectorStore(std::size_t dim, std::optional<Sq8Codec> codec) : dim_(dim), codec_(std::move(codec)) {}

  void append(std::span<const float> v);
  std::size_t size() const;
  std::size_t dim() const { return dim_; }
  const std::optional<Sq8Codec>& codec() const { return codec_; }
  std::span<const float> floats() const { return floats_; }
  kernels::RowSource source(std::span<const std::uint32_t> ids = {}) const;

  void serialize(ByteWriter& w) const;
  static VectorStore deserialize(ByteReader& r, std::size_t dim, const std::optional<Sq8Codec>& codec);

 private:
  std::size_t dim_ = 0;
  std::optional<Sq8Codec> codec_;
  std::vector<float> floats_;
  std::vector<std::uint8_t> codes_;
};

std::unique_ptr<VectorIndex> build_index(const IndexParams& params, Metric metric,
                                         std::span<const float> data, std::size_t dim,
                                         BuildStats* stats = nullptr);

// "MIX1" container: magic, version, kind, params, then the kind's body.
std::vector<std::uint8_t> serialize_index(const VectorIndex& index, const IndexParams& params);

struct LoadedIndex {
  IndexParams params;
  std::unique_ptr<VectorIndex> index;
};
LoadedIndex deserialize_index(std::span<const std::uint8_t> bytes);

}  // namespace logvec
