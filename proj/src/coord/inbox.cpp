#include "logvec/coord/inbox.hpp"

#include <algorithm>

namespace logvec {

Inbox::Inbox(LogBroker& broker, MetaStore& meta, std::string channel, std::string owner,
             std::uint64_t default_from)
    : meta_(meta), key_("position/" + owner + "/" + channel) {
  broker.create_channel(channel);
  std::uint64_t from = default_from;
  if (auto saved = meta_.get(key_)) from = std::stoull(*saved);
  from = std::clamp(from, broker.base_offset(channel), broker.end_offset(channel));
  sub_ = std::make_unique<Subscription>(broker, channel, from);
}

std::size_t Inbox::drain(const std::function<void(const LogEntry&)>& handle) {
  std::size_t n = 0;
  while (auto e = sub_->poll()) {
    handle(*e);
    meta_.put(key_, std::to_string(sub_->position().next_offset));
    ++n;
  }
  return n;
}

}  // namespace logvec
