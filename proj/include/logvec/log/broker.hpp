#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "logvec/core/hlc.hpp"
#include "logvec/log/entry.hpp"

namespace logvec {

struct BrokerOptions {
  bool fsync = false;  // fdatasync after every append
};

// In-process stand-in for a Kafka-style log service. Every channel is an
// append-only record file; offsets are dense from zero. A prefix dropped by
// garbage collection is remembered in a sidecar so offsets stay stable.
class LogBroker {
 public:
  explicit LogBroker(std::filesystem::path dir, BrokerOptions options = {});
  ~LogBroker();
  LogBroker(const LogBroker&) = delete;
  LogBroker& operator=(const LogBroker&) = delete;

  // Idempotent.
  void create_channel(const std::string& name);
  bool has_channel(const std::string& name) const;
  std::vector<std::string> channels() const;

  std::uint64_t publish(const std::string& channel, const LogEntry& entry);

  std::uint64_t end_offset(const std::string& channel) const;
  std::uint64_t base_offset(const std::string& channel) const;
  LogEntry read(const std::string& channel, std::uint64_t offset) const;
  // Blocks until `offset` exists or the timeout passes.
  bool wait_for(const std::string& channel, std::uint64_t offset,
                std::chrono::milliseconds timeout) const;

  HlcTimestamp last_time_tick(const std::string& channel) const;
  // Largest timestamp across all channels; seeds the TSO after a restart.
  HlcTimestamp max_timestamp() const;

  // Drops entries below `new_base`. Reading them afterwards is an error.
  void truncate_prefix(const std::string& channel, std::uint64_t new_base);

  // Fails the next `n` publishes as if the disk write had failed.
  void inject_write_failures(int n);

  const std::filesystem::path& dir() const { return dir_; }
  std::uint64_t bytes_written() const;

 private:
  struct Channel;
  Channel& channel(const std::string& name) const;
  std::filesystem::path path_for(const std::string& name) const;
  void load_channel(const std::string& name);

  std::filesystem::path dir_;
  BrokerOptions options_;
  mutable std::shared_mutex map_mu_;
  std::map<std::string, std::unique_ptr<Channel>> channels_;
  std::atomic<int> failures_{0};
  std::atomic<std::uint64_t> bytes_written_{0};
};

struct SubscriberPosition {
  std::string channel;
  std::uint64_t next_offset = 0;
  HlcTimestamp last_time_tick;
};

void to_json(nlohmann::json& j, const SubscriberPosition& p);
void from_json(const nlohmann::json& j, SubscriberPosition& p);

// Independent reader of one channel. Each entry at or after the starting
// offset is yielded once, in order.
class Subscription {
 public:
  Subscription(const LogBroker& broker, SubscriberPosition start);
  Subscription(const LogBroker& broker, const std::string& channel, std::uint64_t from_offset)
      : Subscription(broker, SubscriberPosition{channel, from_offset, {}}) {}

  std::optional<LogEntry> poll();
  std::optional<LogEntry> next(std::chrono::milliseconds timeout);
  bool caught_up() const;

  const SubscriberPosition& position() const { return pos_; }

 private:
  LogEntry take();

  const LogBroker* broker_;
  SubscriberPosition pos_;
};

// Sole writer of a channel. Timestamp allocation and append happen under one
// lock, so a time tick can never overtake an entry stamped before it.
class ChannelWriter {
 public:
  ChannelWriter(LogBroker& broker, Tso& tso, std::string channel);

  struct Appended {
    HlcTimestamp timestamp;
    std::uint64_t offset;
  };
  Appended append(const std::function<LogEntry(HlcTimestamp)>& make);
  Appended tick();

  const std::string& channel() const { return channel_; }

 private:
  LogBroker& broker_;
  Tso& tso_;
  std::string channel_;
  std::mutex mu_;
};

// Appends to a multi-writer channel such as "coord". No time ticks flow on
// those channels, so a fresh timestamp per message is enough.
std::uint64_t publish_stamped(LogBroker& broker, Tso& tso, const std::string& channel,
                              LogEntry entry);

}  // namespace logvec
