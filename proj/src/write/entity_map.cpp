#include "logvec/write/entity_map.hpp"

#include <cstdio>

namespace logvec {

namespace {

std::string run_name(std::uint64_t seq) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "run-%010llu", static_cast<unsigned long long>(seq));
  return buf;
}

}  // namespace

EntitySegmentMap::EntitySegmentMap(ObjectStore& store, std::string prefix)
    : store_(store), prefix_(std::move(prefix)) {
  if (!prefix_.empty() && prefix_.back() != '/') prefix_ += '/';
  for (const auto& key : store_.list(prefix_ + "run-")) {
    runs_.push_back(SortedRun::decode(store_.get(key)));
    next_run_ = std::stoull(key.substr(key.rfind('-') + 1)) + 1;
  }
}

void EntitySegmentMap::put(const PrimaryKey& pk, SegmentId segment) { memtable_[pk] = segment; }

void EntitySegmentMap::erase(const PrimaryKey& pk) { memtable_[pk] = SortedRun::kTombstone; }

std::optional<SegmentId> EntitySegmentMap::find(const PrimaryKey& pk) const {
  std::optional<SegmentId> hit;
  if (auto it = memtable_.find(pk); it != memtable_.end()) {
    hit = it->second;
  } else {
    for (auto run = runs_.rbegin(); run != runs_.rend() && !hit; ++run) hit = run->find(pk);
  }
  if (hit && *hit == SortedRun::kTombstone) return std::nullopt;
  return hit;
}

std::optional<std::string> EntitySegmentMap::flush() {
  if (memtable_.empty()) return std::nullopt;
  auto bytes = SortedRun::encode(memtable_);
  const auto key = prefix_ + run_name(next_run_);
  store_.put(key, bytes);
  runs_.push_back(SortedRun::decode(std::move(bytes)));
  ++next_run_;
  memtable_.clear();
  return key;
}

}  // namespace logvec
