#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace logvec {

// Durable string key/value map for cluster metadata (collections, segment
// descriptors, node assignments, consumer positions). Every mutation is one
// appended JSON line; the log is compacted on open.
class MetaStore {
 public:
  explicit MetaStore(std::filesystem::path dir);

  void put(const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& key) const;
  bool remove(const std::string& key);
  std::vector<std::pair<std::string, std::string>> list(const std::string& prefix) const;
  // Persistent counter; first call returns 1.
  std::uint64_t next_id(const std::string& counter);

 private:
  void append(const std::string& line);

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> kv_;
  std::ofstream log_;
};

}  // namespace logvec
