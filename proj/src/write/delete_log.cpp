#include "logvec/write/delete_log.hpp"

#include <algorithm>

#include "logvec/core/bytes.hpp"
#include "logvec/core/error.hpp"

namespace logvec {

void DeleteLog::record(const PrimaryKey& pk, HlcTimestamp ts) {
  entries_.emplace_back(pk, ts);
  auto& v = by_pk_[pk];
  v.insert(std::upper_bound(v.begin(), v.end(), ts), ts);
}

bool DeleteLog::deletes_row(const PrimaryKey& pk, HlcTimestamp row_lsn) const {
  auto it = by_pk_.find(pk);
  return it != by_pk_.end() && it->second.back() > row_lsn;
}

bool DeleteLog::deletes_row_at(const PrimaryKey& pk, HlcTimestamp row_lsn, HlcTimestamp as_of) const {
  auto it = by_pk_.find(pk);
  if (it == by_pk_.end()) return false;
  // Any delete in (row_lsn, as_of].
  auto d = std::upper_bound(it->second.begin(), it->second.end(), row_lsn);
  return d != it->second.end() && *d <= as_of;
}

std::vector<std::uint8_t> DeleteLog::encode() const {
  ByteWriter w;
  w.raw("MDL1");
  w.u64(entries_.size());
  for (const auto& [pk, ts] : entries_) {
    write_pk(w, pk);
    w.u64(ts.raw());
  }
  return w.take();
}

DeleteLog DeleteLog::decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.raw(4) != "MDL1") throw Error(ErrorCode::kCorrupt, "not a deltalog");
  DeleteLog log;
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    auto pk = read_pk(r);
    log.record(pk, HlcTimestamp::from_raw(r.u64()));
  }
  if (!r.done()) throw Error(ErrorCode::kCorrupt, "trailing bytes in deltalog");
  return log;
}

}  // namespace logvec
