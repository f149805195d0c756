#include "logvec/storage/sorted_run.hpp"

#include "logvec/core/bytes.hpp"
#include "logvec/core/error.hpp"

namespace logvec {

std::vector<std::uint8_t> SortedRun::encode(const std::map<PrimaryKey, SegmentId>& entries) {
  ByteWriter w;
  w.raw("MSR1");
  w.u64(entries.size());
  std::vector<std::uint64_t> index;
  std::uint64_t i = 0;
  for (const auto& [pk, seg] : entries) {
    if (i++ % kStride == 0) index.push_back(w.size());
    write_pk(w, pk);
    w.u64(seg);
  }
  const auto footer = w.size();
  w.u32(kStride);
  w.u64(index.size());
  for (auto off : index) w.u64(off);
  w.u64(footer);
  return w.take();
}

SortedRun SortedRun::decode(std::vector<std::uint8_t> bytes) {
  SortedRun run;
  ByteReader r(bytes);
  if (r.raw(4) != "MSR1") throw Error(ErrorCode::kCorrupt, "not a sorted run");
  run.count_ = r.u64();
  if (bytes.size() < 8) throw Error(ErrorCode::kCorrupt, "sorted run too short");
  r.seek(bytes.size() - 8);
  run.pairs_end_ = r.u64();
  r.seek(run.pairs_end_);
  if (r.u32() != kStride) throw Error(ErrorCode::kCorrupt, "sorted run stride mismatch");
  run.index_.resize(r.u64());
  for (auto& off : run.index_) off = r.u64();
  if (run.index_.size() != (run.count_ + kStride - 1) / kStride) {
    throw Error(ErrorCode::kCorrupt, "sorted run index size mismatch");
  }
  run.bytes_ = std::move(bytes);
  return run;
}

std::optional<SegmentId> SortedRun::find(const PrimaryKey& pk) const {
  if (index_.empty()) return std::nullopt;
  // Last block whose first key is <= pk.
  std::size_t lo = 0, hi = index_.size();
  while (hi - lo > 1) {
    const auto mid = (lo + hi) / 2;
    ByteReader r(bytes_);
    r.seek(index_[mid]);
    if (read_pk(r) <= pk) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  ByteReader r(bytes_);
  r.seek(index_[lo]);
  const auto end = std::min<std::uint64_t>(count_, (lo + 1) * std::uint64_t{kStride});
  for (auto i = lo * std::uint64_t{kStride}; i < end; ++i) {
    auto key = read_pk(r);
    auto seg = r.u64();
    if (key == pk) return seg;
    if (pk < key) break;
  }
  return std::nullopt;
}

std::vector<std::pair<PrimaryKey, SegmentId>> SortedRun::entries() const {
  std::vector<std::pair<PrimaryKey, SegmentId>> out;
  ByteReader r(bytes_);
  r.seek(12);
  for (std::uint64_t i = 0; i < count_; ++i) {
    auto key = read_pk(r);
    out.emplace_back(std::move(key), r.u64());
  }
  return out;
}

}  // namespace logvec
