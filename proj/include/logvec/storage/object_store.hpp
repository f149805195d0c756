#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "logvec/core/segment.hpp"

namespace logvec {

// Local-filesystem object store. Keys are '/'-separated relative paths;
// `put` writes a temp file and renames it, so readers see whole objects only.
class ObjectStore {
 public:
  explicit ObjectStore(std::filesystem::path root);

  void put(const std::string& key, std::span<const std::uint8_t> bytes);
  void put(const std::string& key, const std::string& text);
  std::vector<std::uint8_t> get(const std::string& key) const;
  std::string get_text(const std::string& key) const;
  std::vector<std::uint8_t> get_range(const std::string& key, std::uint64_t offset,
                                      std::uint64_t length) const;
  bool exists(const std::string& key) const;
  std::uint64_t size(const std::string& key) const;
  // Sorted keys under `prefix`.
  std::vector<std::string> list(const std::string& prefix) const;
  bool remove(const std::string& key);

  std::uint64_t bytes_read() const { return bytes_read_; }
  std::uint64_t bytes_written() const { return bytes_written_; }
  void reset_counters() {
    bytes_read_ = 0;
    bytes_written_ = 0;
  }
  // The next `n` puts fail before touching the store.
  void inject_put_failures(int n) { put_failures_ = n; }

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path_of(const std::string& key) const;

 private:
  std::filesystem::path root_;
  mutable std::atomic<std::uint64_t> bytes_read_{0};
  std::atomic<std::uint64_t> bytes_written_{0};
  std::atomic<int> put_failures_{0};
};

std::string segment_key(CollectionId collection, SegmentId segment, const std::string& kind);
std::string collection_prefix(CollectionId collection);

// Runs `fn` up to `attempts` times, rethrowing the last kIo failure.
template <typename Fn>
auto with_retries(int attempts, Fn&& fn) -> decltype(fn());

}  // namespace logvec

#include "logvec/core/error.hpp"

namespace logvec {

template <typename Fn>
auto with_retries(int attempts, Fn&& fn) -> decltype(fn()) {
  for (int i = 1;; ++i) {
    try {
      return fn();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kIo || i >= attempts) throw;
    }
  }
}

}  // namespace logvec
