#include "logvec/storage/metastore.hpp"

#include <json.hpp>

#include "logvec/core/error.hpp"

namespace logvec {

namespace fs = std::filesystem;

MetaStore::MetaStore(fs::path dir) : path_(dir / "meta.log") {
  fs::create_directories(dir);
  std::size_t lines = 0;
  bool torn = false;
  {
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error&) {
        torn = true;  // final line cut short by a crash mid-append
        break;
      }
      ++lines;
      if (j.contains("v")) {
        kv_[j.at("k").get<std::string>()] = j.at("v").get<std::string>();
      } else {
        kv_.erase(j.at("k").get<std::string>());
      }
    }
  }
  if (torn || lines != kv_.size() || !fs::exists(path_)) {
    auto tmp = path_;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      for (const auto& [k, v] : kv_) out << nlohmann::json{{"k", k}, {"v", v}}.dump() << '\n';
      if (!out) throw Error(ErrorCode::kIo, "cannot compact " + path_.string());
    }
    fs::rename(tmp, path_);
  }
  log_.open(path_, std::ios::app);
  if (!log_) throw Error(ErrorCode::kIo, "cannot open " + path_.string());
}

void MetaStore::append(const std::string& line) {
  log_ << line << '\n';
  log_.flush();
  if (!log_) throw Error(ErrorCode::kIo, "metastore append failed");
}

void MetaStore::put(const std::string& key, const std::string& value) {
  std::lock_guard lock(mu_);
  append(nlohmann::json{{"k", key}, {"v", value}}.dump());
  kv_[key] = value;
}

std::optional<std::string> MetaStore::get(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = kv_.find(key);
  if (it == kv_.end()) return std::nullopt;
  return it->second;
}

bool MetaStore::remove(const std::string& key) {
  std::lock_guard lock(mu_);
  if (!kv_.count(key)) return false;
  append(nlohmann::json{{"k", key}}.dump());
  kv_.erase(key);
  return true;
}

std::vector<std::pair<std::string, std::string>> MetaStore::list(const std::string& prefix) const {
  std::lock_guard lock(mu_);
  std::vector<std::pair<std::string, std::string>> out;
  for (auto it = kv_.lower_bound(prefix); it != kv_.end() && it->first.compare(0, prefix.size(), prefix) == 0; ++it) {
    out.emplace_back(it->first, it->second);
  }
  return out;
}

std::uint64_t MetaStore::next_id(const std::string& counter) {
  const auto key = "counter/" + counter;
  std::lock_guard lock(mu_);
  std::uint64_t next = 1;
  if (auto it = kv_.find(key); it != kv_.end()) next = std::stoull(it->second) + 1;
  append(nlohmann::json{{"k", key}, {"v", std::to_string(next)}}.dump());
  kv_[key] = std::to_string(next);
  return next;
}

}  // namespace logvec
