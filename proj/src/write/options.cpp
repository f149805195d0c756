#include "logvec/write/options.hpp"

#include "logvec/core/error.hpp"

namespace logvec {

void WriteOptions::check() const {
  if (seal_rows == 0 || seal_bytes == 0) throw Error(ErrorCode::kConfig, "seal thresholds must be > 0");
  if (slice_rows == 0) throw Error(ErrorCode::kConfig, "slice_rows must be > 0");
  if (merge_min_segments < 2) throw Error(ErrorCode::kConfig, "merge_min_segments must be >= 2");
  if (!(merge_fraction > 0 && merge_fraction <= 1)) {
    throw Error(ErrorCode::kConfig, "merge_fraction must be in (0, 1]");
  }
}

nlohmann::json WriteOptions::to_json() const {
  return {{"seal_rows", seal_rows},
          {"seal_bytes", seal_bytes},
          {"inactivity_ms", inactivity_ms},
          {"slice_rows", slice_rows},
          {"map_flush_entries", map_flush_entries},
          {"merge_min_segments", merge_min_segments},
          {"merge_fraction", merge_fraction}};
}

WriteOptions WriteOptions::from_json(const nlohmann::json& j) {
  WriteOptions o;
  o.seal_rows = j.value("seal_rows", o.seal_rows);
  o.seal_bytes = j.value("seal_bytes", o.seal_bytes);
  o.inactivity_ms = j.value("inactivity_ms", o.inactivity_ms);
  o.slice_rows = j.value("slice_rows", o.slice_rows);
  o.map_flush_entries = j.value("map_flush_entries", o.map_flush_entries);
  o.merge_min_segments = j.value("merge_min_segments", o.merge_min_segments);
  o.merge_fraction = j.value("merge_fraction", o.merge_fraction);
  o.check();
  return o;
}

}  // namespace logvec
