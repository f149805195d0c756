#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "logvec/core/bytes.hpp"

namespace logvec {

// Per-dimension affine quantizer mapping each float coordinate to one byte:
// q = round((x - min) * 255 / (max - min)), clamped to [0, 255], halves away
// from zero. A dimension with max == min encodes 0 and decodes to min.
class Sq8Codec {
 public:
  Sq8Codec() = default;
  Sq8Codec(std::vector<float> min, std::vector<float> max);

  // Trains per-dimension bounds from `n` row-major vectors.
  static Sq8Codec train(std::span<const float> data, std::size_t dim);

  std::size_t dim() const { return min_.size(); }
  const std::vector<float>& min() const { return min_; }
  const std::vector<float>& max() const { return max_; }

  void encode(std::span<const float> x, std::span<std::uint8_t> out) const;
  void decode(std::span<const std::uint8_t> code, std::span<float> out) const;
  std::vector<std::uint8_t> encode(std::span<const float> x) const;
  std::vector<float> decode(std::span<const std::uint8_t> code) const;

  void serialize(ByteWriter& w) const;
  static Sq8Codec deserialize(ByteReader& r);

  friend bool operator==(const Sq8Codec&, const Sq8Codec&) = default;

 private:
  std::vector<float> min_;
  std::vector<float> max_;
};

}  // namespace logvec
