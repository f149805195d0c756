#include "logvec/index/sq8.hpp"

#include <algorithm>
#include <cmath>

#include "logvec/core/error.hpp"

namespace logvec {

Sq8Codec::Sq8Codec(std::vector<float> min, std::vector<float> max)
    : min_(std::move(min)), max_(std::move(max)) {
  if (min_.size() != max_.size()) throw Error(ErrorCode::kDimensionMismatch, "codec bounds");
}

Sq8Codec Sq8Codec::train(std::span<const float> data, std::size_t dim) {
  if (dim == 0 || data.size() % dim != 0) {
    throw Error(ErrorCode::kDimensionMismatch, "codec training data");
  }
  std::vector<float> lo(dim, 0.0f), hi(dim, 0.0f);
  const std::size_t n = data.size() / dim;
  if (n > 0) {
    std::copy_n(data.begin(), dim, lo.begin());
    std::copy_n(data.begin(), dim, hi.begin());
  }
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      lo[d] = std::min(lo[d], data[i * dim + d]);
      hi[d] = std::max(hi[d], data[i * dim + d]);
    }
  }
  return Sq8Codec(std::move(lo), std::move(hi));
}

void Sq8Codec::encode(std::span<const float> x, std::span<std::uint8_t> out) const {
  if (x.size() != dim() || out.size() != dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "sq8 encode");
  }
  for (std::size_t d = 0; d < dim(); ++d) {
    const double range = static_cast<double>(max_[d]) - min_[d];
    if (range <= 0) {
      out[d] = 0;
      continue;
    }
    // std::round rounds halves away from zero.
    const double q = std::round((static_cast<double>(x[d]) - min_[d]) * 255.0 / range);
    out[d] = static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
  }
}

void Sq8Codec::decode(std::span<const std::uint8_t> code, std::span<float> out) const {
  if (code.size() != dim() || out.size() != dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "sq8 decode");
  }
  for (std::size_t d = 0; d < dim(); ++d) {
    const double range = static_cast<double>(max_[d]) - min_[d];
    out[d] = static_cast<float>(min_[d] + (range <= 0 ? 0.0 : code[d] * range / 255.0));
  }
}

std::vector<std::uint8_t> Sq8Codec::encode(std::span<const float> x) const {
  std::vector<std::uint8_t> out(dim());
  encode(x, out);
  return out;
}

std::vector<float> Sq8Codec::decode(std::span<const std::uint8_t> code) const {
  std::vector<float> out(dim());
  decode(code, out);
  return out;
}

void Sq8Codec::serialize(ByteWriter& w) const {
  w.u32(static_cast<std::uint32_t>(dim()));
  w.f32s(min_);
  w.f32s(max_);
}

Sq8Codec Sq8Codec::deserialize(ByteReader& r) {
  const std::size_t dim = r.u32();
  std::vector<float> lo(dim), hi(dim);
  r.f32s(lo);
  r.f32s(hi);
  return Sq8Codec(std::move(lo), std::move(hi));
}

}  // namespace logvec
