#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "logvec/core/primary_key.hpp"
#include "logvec/core/segment.hpp"
#include "logvec/storage/object_store.hpp"
#include "logvec/storage/sorted_run.hpp"

namespace logvec {

// pk -> segment map kept as a small LSM tree: a sorted memtable over
// immutable sorted runs in the object store. Deletes are tombstones.
class EntitySegmentMap {
 public:
  // Loads every run already stored under `prefix`.
  EntitySegmentMap(ObjectStore& store, std::string prefix);

  void put(const PrimaryKey& pk, SegmentId segment);
  void erase(const PrimaryKey& pk);
  // Memtable first, then runs newest to oldest.
  std::optional<SegmentId> find(const PrimaryKey& pk) const;

  // Writes the memtable as a new run and clears it. On failure the memtable
  // is kept. Returns the run key, or nullopt when there was nothing to flush.
  std::optional<std::string> flush();

  std::size_t memtable_size() const { return memtable_.size(); }
  std::size_t run_count() const { return runs_.size(); }
  const std::string& prefix() const { return prefix_; }

 private:
  ObjectStore& store_;
  std::string prefix_;
  std::map<PrimaryKey, SegmentId> memtable_;
  std::vector<SortedRun> runs_;  // oldest first
  std::uint64_t next_run_ = 0;
};

}  // namespace logvec
