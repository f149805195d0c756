#pragma once

#include <functional>
#include <memory>
#include <string>

#include "logvec/log/broker.hpp"
#include "logvec/storage/metastore.hpp"

namespace logvec {

// Sequential reader of one channel whose position lives in the MetaStore,
// so a restarted coordinator resumes where it stopped.
class Inbox {
 public:
  // Without a stored position, reading starts at `default_from` (clamped to
  // the retained range).
  Inbox(LogBroker& broker, MetaStore& meta, std::string channel, std::string owner,
        std::uint64_t default_from = 0);

  // Hands every available entry to `handle`, saving the position after each.
  std::size_t drain(const std::function<void(const LogEntry&)>& handle);
  bool caught_up() const { return sub_->caught_up(); }
  std::uint64_t offset() const { return sub_->position().next_offset; }

 private:
  MetaStore& meta_;
  std::string key_;
  std::unique_ptr<Subscription> sub_;
};

}  // namespace logvec
