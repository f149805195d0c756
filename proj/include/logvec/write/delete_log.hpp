#pragma once

#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "logvec/core/hlc.hpp"
#include "logvec/core/primary_key.hpp"
#include "logvec/core/segment.hpp"

namespace logvec {

// Deletes seen on one WAL channel. A row is gone once a delete of its pk
// carries a timestamp above the row's LSN, so a pk that is deleted and then
// inserted again stays visible in its new row.
class DeleteLog {
 public:
  void record(const PrimaryKey& pk, HlcTimestamp ts);
  bool deletes_row(const PrimaryKey& pk, HlcTimestamp row_lsn) const;
  // Same test restricted to deletes at or before `as_of`.
  bool deletes_row_at(const PrimaryKey& pk, HlcTimestamp row_lsn, HlcTimestamp as_of) const;

  const std::vector<std::pair<PrimaryKey, HlcTimestamp>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  // Deltalog object: "MDL1", u64 count, then (pk, u64 ts) pairs.
  std::vector<std::uint8_t> encode() const;
  static DeleteLog decode(std::span<const std::uint8_t> bytes);

 private:
  std::vector<std::pair<PrimaryKey, HlcTimestamp>> entries_;
  std::unordered_map<PrimaryKey, std::vector<HlcTimestamp>, PrimaryKeyHash> by_pk_;
};

}  // namespace logvec
