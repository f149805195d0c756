#pragma once

#include <cstdint>

#include <json.hpp>

namespace logvec {

struct WriteOptions {
  std::uint64_t seal_rows = 4096;
  std::uint64_t seal_bytes = std::uint64_t{1} << 20;
  std::uint64_t inactivity_ms = 10'000;
  std::uint32_t slice_rows = 256;
  std::uint64_t map_flush_entries = 1024;
  // Merge once this many sealed segments of one shard are each smaller than
  // merge_fraction of the row threshold.
  std::uint32_t merge_min_segments = 4;
  double merge_fraction = 0.25;

  void check() const;
  nlohmann::json to_json() const;
  static WriteOptions from_json(const nlohmann::json& j);
};

}  // namespace logvec
