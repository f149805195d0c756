#include "logvec/log/time_tick.hpp"

#include <algorithm>

#include "logvec/core/error.hpp"

namespace logvec {

TimeTickEmitter::TimeTickEmitter(std::uint64_t interval_ms) : interval_ms_(interval_ms) {
  if (interval_ms == 0) throw Error(ErrorCode::kInvalidArgument, "time tick interval must be > 0");
}

TimeTickEmitter::~TimeTickEmitter() { stop(); }

void TimeTickEmitter::add_writer(ChannelWriter* writer) {
  std::lock_guard lock(mu_);
  if (std::find(writers_.begin(), writers_.end(), writer) == writers_.end()) {
    writers_.push_back(writer);
  }
}

void TimeTickEmitter::remove_writer(const ChannelWriter* writer) {
  std::lock_guard lock(mu_);
  std::erase(writers_, writer);
}

int TimeTickEmitter::emit_locked() {
  int n = 0;
  for (auto* w : writers_) {
    w->tick();
    ++n;
  }
  return n;
}

int TimeTickEmitter::emit_due(std::uint64_t now_ms) {
  std::lock_guard lock(mu_);
  const auto boundary = now_ms / interval_ms_ * interval_ms_;
  if (boundary <= last_round_ms_) return 0;
  last_round_ms_ = boundary;
  return emit_locked();
}

int TimeTickEmitter::emit_now() {
  std::lock_guard lock(mu_);
  return emit_locked();
}

std::uint64_t TimeTickEmitter::next_due_ms() const {
  std::lock_guard lock(mu_);
  return (last_round_ms_ / interval_ms_ + 1) * interval_ms_;
}

void TimeTickEmitter::start(const Clock& clock) {
  stop();
  thread_ = std::jthread([this, &clock](std::stop_token st) {
    while (!st.stop_requested()) {
      emit_due(clock.now_ms());
      std::this_thread::sleep_for(std::chrono::milliseconds(std::max<std::uint64_t>(1, interval_ms_ / 4)));
    }
  });
}

void TimeTickEmitter::stop() {
  if (thread_.joinable()) {
    thread_.request_stop();
    thread_.join();
  }
}

}  // namespace logvec
