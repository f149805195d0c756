#include "logvec/write/growing_buffer.hpp"

#include <algorithm>

#include "logvec/core/error.hpp"
#include "logvec/index/segment_search.hpp"

namespace logvec {

GrowingSegmentBuffer::GrowingSegmentBuffer(const CollectionInfo& info, SegmentId segment,
                                           ShardId shard, std::uint32_t slice_rows,
                                           bool temp_indexes)
    : info_(&info),
      slice_rows_(slice_rows),
      temp_indexes_(temp_indexes),
      cols_(SegmentColumns::empty_for(info.schema)) {
  if (slice_rows == 0) throw Error(ErrorCode::kInvalidArgument, "slice size must be > 0");
  desc_.segment_id = segment;
  desc_.collection_id = info.id;
  desc_.shard_id = shard;
}

bool GrowingSegmentBuffer::append(const Entity& e) {
  if (desc_.sealed()) {
    throw Error(ErrorCode::kInvalidArgument,
                "segment " + std::to_string(desc_.segment_id) + " is sealed");
  }
  cols_.append(info_->schema, e);
  desc_.row_count = cols_.rows();
  desc_.byte_size += info_->schema.row_bytes(e);
  advance(e.lsn);
  const bool closed = cols_.rows() % slice_rows_ == 0;
  desc_.slice_count = static_cast<std::uint32_t>((cols_.rows() + slice_rows_ - 1) / slice_rows_);
  return closed;
}

void GrowingSegmentBuffer::advance(HlcTimestamp ts) { desc_.progress = std::max(desc_.progress, ts); }

void GrowingSegmentBuffer::seal(HlcTimestamp at) {
  advance(at);
  desc_.state = SegmentState::kSealed;
}

std::size_t GrowingSegmentBuffer::build_pending_temp_indexes(kernels::ScanStats* stats) {
  if (!temp_indexes_) return 0;
  std::size_t built = 0;
  const auto& fields = info_->schema.vector_fields;
  while (temp_.size() < full_slices()) {
    const std::size_t slice = temp_.size();
    std::vector<std::unique_ptr<VectorIndex>> per_field;
    for (std::size_t f = 0; f < fields.size(); ++f) {
      const std::size_t dim = fields[f].dim;
      auto span = std::span<const float>(cols_.vectors[f]).subspan(slice * slice_rows_ * dim,
                                                                   std::size_t{slice_rows_} * dim);
      const auto nlist = std::min<std::uint32_t>(kDefaultTempNlist, slice_rows_);
      auto idx = build_temp_index(span, dim, info_->metric, nlist);
      if (stats) stats->distance_evals += std::uint64_t{slice_rows_} * nlist * 10;
      per_field.push_back(std::move(idx));
      ++built;
    }
    temp_.push_back(std::move(per_field));
  }
  return built;
}

const VectorIndex* GrowingSegmentBuffer::temp_index(std::size_t slice, std::size_t field) const {
  if (slice >= temp_.size()) return nullptr;
  return temp_[slice][field].get();
}

std::vector<Neighbor> GrowingSegmentBuffer::search(std::size_t field, std::span<const float> query,
                                                   Metric metric, std::size_t k,
                                                   const SearchKnobs& knobs,
                                                   const DeleteBitmap* deleted,
                                                   const RowPredicate* filter,
                                                   kernels::ScanStats* stats) const {
  const std::size_t dim = info_->schema.vector_fields.at(field).dim;
  const auto& column = cols_.vectors[field];
  const std::size_t rows = cols_.rows();
  std::vector<Neighbor> all;
  std::size_t start = 0;
  SearchKnobs temp_knobs = knobs;
  temp_knobs.nprobe = std::clamp<std::uint32_t>(knobs.nprobe, 1, kDefaultTempNlist);
  // Slices with a temporary index are searched through it; the rest of the
  // segment (open slice plus slices whose index is pending) is one scan.
  for (std::size_t s = 0; s < temp_.size(); ++s) {
    const std::size_t base = s * slice_rows_;
    RowPredicate shifted = [&, base](std::uint32_t row) {
      const auto r = static_cast<std::uint32_t>(base + row);
      if (deleted && deleted->test(r)) return false;
      return !filter || (*filter)(r);
    };
    SegmentSearchInput in;
    in.vectors = std::span<const float>(column).subspan(base * dim, std::size_t{slice_rows_} * dim);
    in.dim = dim;
    in.index = temp_[s][field].get();
    in.filter = &shifted;
    in.knobs = temp_knobs;
    for (auto n : segment_search(in, query, metric, k, stats)) {
      all.push_back({static_cast<std::uint32_t>(base + n.row), n.score});
    }
    start = base + slice_rows_;
  }
  if (start < rows) {
    RowPredicate shifted = [&, start](std::uint32_t row) {
      const auto r = static_cast<std::uint32_t>(start + row);
      if (deleted && deleted->test(r)) return false;
      return !filter || (*filter)(r);
    };
    SegmentSearchInput in;
    in.vectors = std::span<const float>(column).subspan(start * dim, (rows - start) * dim);
    in.dim = dim;
    in.filter = &shifted;
    for (auto n : segment_search(in, query, metric, k, stats)) {
      all.push_back({static_cast<std::uint32_t>(start + n.row), n.score});
    }
  }
  return merge_topk(metric, std::move(all), k);
}

}  // namespace logvec
