#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <stop_token>
#include <thread>
#include <vector>

#include "logvec/core/hlc.hpp"
#include "logvec/log/broker.hpp"

namespace logvec {

// Periodic watermark publisher. Ticks go through each channel's writer, so
// the watermark guarantee holds whether the emitter is driven by a virtual
// clock (emit_due) or by its own wall-clock thread.
class TimeTickEmitter {
 public:
  explicit TimeTickEmitter(std::uint64_t interval_ms);
  ~TimeTickEmitter();

  void add_writer(ChannelWriter* writer);
  void remove_writer(const ChannelWriter* writer);

  // Emits one round of ticks if at least one interval boundary has passed
  // since the last round. Several missed boundaries collapse into one round.
  // Returns the number of ticks published.
  int emit_due(std::uint64_t now_ms);
  int emit_now();
  // First boundary after the last round.
  std::uint64_t next_due_ms() const;

  void start(const Clock& clock);
  void stop();

  std::uint64_t interval_ms() const { return interval_ms_; }

 private:
  int emit_locked();

  std::uint64_t interval_ms_;
  mutable std::mutex mu_;
  std::vector<ChannelWriter*> writers_;
  std::uint64_t last_round_ms_ = 0;
  std::jthread thread_;
};

}  // namespace logvec
