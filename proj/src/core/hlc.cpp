#include "logvec/core/hlc.hpp"

#include <algorithm>
#include <chrono>

namespace logvec {

std::string HlcTimestamp::to_string() const {
  return std::to_string(physical()) + "." + std::to_string(logical());
}

HlcTimestamp hlc_tick(HlcClockState& state, std::uint64_t now_ms) {
  const HlcTimestamp last = state.last;
  std::uint64_t physical = std::max(now_ms, last.physical());
  std::uint64_t logical = 0;
  if (physical == last.physical()) {
    logical = std::uint64_t{last.logical()} + 1;
    if (logical > HlcTimestamp::kLogicalMask) {
      physical += 1;
      logical = 0;
    }
  }
  state.last = HlcTimestamp(physical, static_cast<std::uint32_t>(logical));
  return state.last;
}

std::uint64_t WallClock::now_ms() const {
  using namespace std::chrono;
  return static_cast<std::uint64_t>(
      duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count());
}

HlcTimestamp Tso::allocate() {
  std::lock_guard lock(mu_);
  return hlc_tick(state_, clock_.now_ms());
}

HlcTimestamp Tso::last() const {
  std::lock_guard lock(mu_);
  return state_.last;
}

void Tso::observe(HlcTimestamp ts) {
  std::lock_guard lock(mu_);
  if (ts > state_.last) state_.last = ts;
}

}  // namespace logvec
