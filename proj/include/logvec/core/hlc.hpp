#pragma once

#include <compare>
#include <cstdint>
#include <mutex>
#include <string>

namespace logvec {

// Hybrid logical clock value packed as `physical << 18 | logical`. The packed
// integer order equals the lexicographic (physical, logical) order, so the
// value doubles as the log sequence number of every logged request.
class HlcTimestamp {
 public:
  static constexpr int kLogicalBits = 18;
  static constexpr std::uint64_t kLogicalMask = (std::uint64_t{1} << kLogicalBits) - 1;
  static constexpr std::uint64_t kMaxPhysical = (std::uint64_t{1} << (64 - kLogicalBits)) - 1;

  constexpr HlcTimestamp() = default;
  constexpr HlcTimestamp(std::uint64_t physical_ms, std::uint32_t logical)
      : raw_((physical_ms << kLogicalBits) | (logical & kLogicalMask)) {}

  static constexpr HlcTimestamp from_raw(std::uint64_t raw) {
    HlcTimestamp ts;
    ts.raw_ = raw;
    return ts;
  }
  static constexpr HlcTimestamp max() { return from_raw(~std::uint64_t{0}); }

  constexpr std::uint64_t raw() const { return raw_; }
  constexpr std::uint64_t physical() const { return raw_ >> kLogicalBits; }
  constexpr std::uint32_t logical() const {
    return static_cast<std::uint32_t>(raw_ & kLogicalMask);
  }

  friend constexpr auto operator<=>(HlcTimestamp, HlcTimestamp) = default;

  std::string to_string() const;

 private:
  std::uint64_t raw_ = 0;
};

// Last issued timestamp of one timestamp oracle.
struct HlcClockState {
  HlcTimestamp last;
};

// Issues a timestamp strictly greater than `state.last`. The physical part
// follows the wall clock when it moves forward; a stalled or regressing wall
// clock bumps the logical counter, and a saturated counter rolls into the
// next millisecond instead of failing.
HlcTimestamp hlc_tick(HlcClockState& state, std::uint64_t now_ms);

// Millisecond time source. Virtual clocks make whole-cluster runs reproducible.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::uint64_t now_ms() const = 0;
};

class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(std::uint64_t start_ms = 1'000'000) : now_(start_ms) {}
  std::uint64_t now_ms() const override { return now_; }
  void set(std::uint64_t ms) {
    if (ms > now_) now_ = ms;
  }
  void advance(std::uint64_t delta_ms) { now_ += delta_ms; }

 private:
  std::uint64_t now_;
};

class WallClock final : public Clock {
 public:
  std::uint64_t now_ms() const override;
};

// Central timestamp oracle. All allocations go through one mutex, which is the
// single serialization point of the deployment.
class Tso {
 public:
  explicit Tso(const Clock& clock) : clock_(clock) {}

  HlcTimestamp allocate();
  HlcTimestamp last() const;
  // Raises the floor after recovery so new timestamps exceed persisted ones.
  void observe(HlcTimestamp ts);

  const Clock& clock() const { return clock_; }

 private:
  const Clock& clock_;
  mutable std::mutex mu_;
  HlcClockState state_;
};

}  // namespace logvec
