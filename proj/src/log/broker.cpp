#include "logvec/log/broker.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cctype>
#include <cerrno>
#include <cstring>
#include <fstream>

#include "logvec/core/error.hpp"

namespace logvec {

namespace fs = std::filesystem;

struct LogBroker::Channel {
  std::string name;
  int fd = -1;
  std::uint64_t file_size = 0;
  std::uint64_t base = 0;
  std::deque<LogEntry> entries;
  std::deque<std::uint64_t> record_pos;  // byte position of each entry's length prefix
  HlcTimestamp last_tick;
  HlcTimestamp max_ts;
  mutable std::mutex mu;
  mutable std::condition_variable cv;

  ~Channel() {
    if (fd >= 0) ::close(fd);
  }
};

namespace {

bool valid_channel_name(const std::string& name) {
  if (name.empty() || name.front() == '/' || name.back() == '/') return false;
  if (name.find("..") != std::string::npos || name.find("//") != std::string::npos) return false;
  for (char c : name) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '/' ||
          c == '.')) {
      return false;
    }
  }
  return true;
}

std::vector<std::uint8_t> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const fs::path& p, const std::string& text) {
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
  }
  fs::rename(tmp, p);
}

void write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    auto w = ::write(fd, data, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kIo, std::string("log append failed: ") + std::strerror(errno));
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

fs::path sidecar(fs::path p) {
  p += ".base";
  return p;
}

}  // namespace

LogBroker::LogBroker(fs::path dir, BrokerOptions options)
    : dir_(std::move(dir)), options_(options) {
  fs::create_directories(dir_);
  for (const auto& it : fs::recursive_directory_iterator(dir_)) {
    if (!it.is_regular_file() || it.path().extension() != ".mlog") continue;
    auto rel = fs::relative(it.path(), dir_).generic_string();
    load_channel(rel.substr(0, rel.size() - 5));
  }
}

LogBroker::~LogBroker() = default;

fs::path LogBroker::path_for(const std::string& name) const { return dir_ / (name + ".mlog"); }

// Sidecar holds {"base", "skip_bytes", "compacted_size"}. A nonzero skip means
// compaction may not have finished: if the data file already has the
// compacted size, the skip has been applied.
void LogBroker::load_channel(const std::string& name) {
  auto ch = std::make_unique<Channel>();
  ch->name = name;
  const auto path = path_for(name);
  std::uint64_t skip = 0;
  if (fs::exists(sidecar(path))) {
    auto j = nlohmann::json::parse(std::ifstream(sidecar(path)));
    ch->base = j.at("base").get<std::uint64_t>();
    skip = j.value("skip_bytes", std::uint64_t{0});
    if (skip > 0 && fs::file_size(path) == j.value("compacted_size", std::uint64_t{0})) skip = 0;
  }
  auto bytes = read_file(path);
  if (skip > bytes.size()) throw Error(ErrorCode::kCorrupt, "log sidecar past end: " + name);
  std::size_t pos = 0;
  if (skip > 0) {
    // Finish the interrupted compaction before accepting appends.
    bytes.erase(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(skip));
    auto tmp = path;
    tmp += ".tmp";
    std::ofstream(tmp, std::ios::binary | std::ios::trunc)
        .write(reinterpret_cast<const char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()));
    fs::rename(tmp, path);
    write_file_atomic(sidecar(path), nlohmann::json{{"base", ch->base}}.dump());
  }
  while (pos + 4 <= bytes.size()) {
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= std::uint32_t{bytes[pos + i]} << (8 * i);
    if (pos + 4 + len > bytes.size()) break;
    auto e = decode_entry(std::span(bytes).subspan(pos + 4, len));
    if (e.kind == EntryKind::kTimeTick) ch->last_tick = e.timestamp;
    ch->max_ts = std::max(ch->max_ts, e.timestamp);
    ch->record_pos.push_back(pos);
    ch->entries.push_back(std::move(e));
    pos += 4 + len;
  }
  // A torn tail is an append that was never acknowledged.
  if (pos != bytes.size()) fs::resize_file(path, pos);
  ch->file_size = pos;
  ch->fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CLOEXEC);
  if (ch->fd < 0) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  channels_[name] = std::move(ch);
}

void LogBroker::create_channel(const std::string& name) {
  if (!valid_channel_name(name)) throw Error(ErrorCode::kInvalidArgument, "bad channel name: " + name);
  std::unique_lock lock(map_mu_);
  if (channels_.count(name)) return;
  const auto path = path_for(name);
  fs::create_directories(path.parent_path());
  auto ch = std::make_unique<Channel>();
  ch->name = name;
  ch->fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (ch->fd < 0) throw Error(ErrorCode::kIo, "cannot create " + path.string());
  channels_[name] = std::move(ch);
}

bool LogBroker::has_channel(const std::string& name) const {
  std::shared_lock lock(map_mu_);
  return channels_.count(name) > 0;
}

std::vector<std::string> LogBroker::channels() const {
  std::shared_lock lock(map_mu_);
  std::vector<std::string> out;
  for (const auto& [name, _] : channels_) out.push_back(name);
  return out;
}

LogBroker::Channel& LogBroker::channel(const std::string& name) const {
  std::shared_lock lock(map_mu_);
  auto it = channels_.find(name);
  if (it == channels_.end()) throw Error(ErrorCode::kNotFound, "unknown channel: " + name);
  return *it->second;
}

std::uint64_t LogBroker::publish(const std::string& name, const LogEntry& entry) {
  auto& ch = channel(name);
  auto record = encode_entry(entry);
  std::vector<std::uint8_t> framed(4 + record.size());
  const auto len = static_cast<std::uint32_t>(record.size());
  for (int i = 0; i < 4; ++i) framed[i] = static_cast<std::uint8_t>(len >> (8 * i));
  std::memcpy(framed.data() + 4, record.data(), record.size());

  std::lock_guard lock(ch.mu);
  if (entry.kind == EntryKind::kTimeTick) {
    if (entry.timestamp < ch.last_tick) {
      throw Error(ErrorCode::kInvalidArgument, "time tick regresses on " + name);
    }
  } else if (entry.timestamp <= ch.last_tick) {
    throw Error(ErrorCode::kInvalidArgument,
                "entry at " + entry.timestamp.to_string() + " behind watermark on " + name);
  }
  if (failures_.load() > 0 && failures_.fetch_sub(1) > 0) {
    throw Error(ErrorCode::kIo, "injected log write failure on " + name);
  }
  try {
    write_all(ch.fd, framed.data(), framed.size());
    if (options_.fsync && ::fdatasync(ch.fd) != 0) {
      throw Error(ErrorCode::kIo, "fdatasync failed on " + name);
    }
  } catch (...) {
    // All or nothing: drop whatever part of the record reached the file.
    if (::ftruncate(ch.fd, static_cast<off_t>(ch.file_size)) != 0) {
      // The torn tail is discarded on the next open.
    }
    throw;
  }
  ch.record_pos.push_back(ch.file_size);
  ch.file_size += framed.size();
  bytes_written_ += framed.size();
  if (entry.kind == EntryKind::kTimeTick) ch.last_tick = entry.timestamp;
  ch.max_ts = std::max(ch.max_ts, entry.timestamp);
  ch.entries.push_back(entry);
  const auto offset = ch.base + ch.entries.size() - 1;
  ch.cv.notify_all();
  return offset;
}

std::uint64_t LogBroker::end_offset(const std::string& name) const {
  auto& ch = channel(name);
  std::lock_guard lock(ch.mu);
  return ch.base + ch.entries.size();
}

std::uint64_t LogBroker::base_offset(const std::string& name) const {
  auto& ch = channel(name);
  std::lock_guard lock(ch.mu);
  return ch.base;
}

LogEntry LogBroker::read(const std::string& name, std::uint64_t offset) const {
  auto& ch = channel(name);
  std::lock_guard lock(ch.mu);
  if (offset < ch.base) {
    throw Error(ErrorCode::kHistoryExpired,
                name + " offset " + std::to_string(offset) + " was garbage collected");
  }
  if (offset >= ch.base + ch.entries.size()) {
    throw Error(ErrorCode::kNotFound, name + " offset " + std::to_string(offset) + " not yet written");
  }
  return ch.entries[offset - ch.base];
}

bool LogBroker::wait_for(const std::string& name, std::uint64_t offset,
                         std::chrono::milliseconds timeout) const {
  auto& ch = channel(name);
  std::unique_lock lock(ch.mu);
  return ch.cv.wait_for(lock, timeout, [&] { return offset < ch.base + ch.entries.size(); });
}

HlcTimestamp LogBroker::last_time_tick(const std::string& name) const {
  auto& ch = channel(name);
  std::lock_guard lock(ch.mu);
  return ch.last_tick;
}

HlcTimestamp LogBroker::max_timestamp() const {
  std::shared_lock lock(map_mu_);
  HlcTimestamp out;
  for (const auto& [_, ch] : channels_) {
    std::lock_guard cl(ch->mu);
    out = std::max(out, ch->max_ts);
  }
  return out;
}

void LogBroker::truncate_prefix(const std::string& name, std::uint64_t new_base) {
  auto& ch = channel(name);
  std::lock_guard lock(ch.mu);
  if (new_base <= ch.base) return;
  new_base = std::min<std::uint64_t>(new_base, ch.base + ch.entries.size());
  const auto drop = new_base - ch.base;
  const std::uint64_t skip = drop < ch.entries.size() ? ch.record_pos[drop] : ch.file_size;
  const auto path = path_for(name);

  write_file_atomic(sidecar(path), nlohmann::json{{"base", new_base},
                                                  {"skip_bytes", skip},
                                                  {"compacted_size", ch.file_size - skip}}
                                       .dump());
  auto bytes = read_file(path);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data() + skip),
              static_cast<std::streamsize>(bytes.size() - skip));
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
  ::close(ch.fd);
  ch.fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CLOEXEC);
  if (ch.fd < 0) throw Error(ErrorCode::kIo, "cannot reopen " + path.string());
  write_file_atomic(sidecar(path), nlohmann::json{{"base", new_base}}.dump());

  ch.entries.erase(ch.entries.begin(), ch.entries.begin() + static_cast<std::ptrdiff_t>(drop));
  ch.record_pos.erase(ch.record_pos.begin(),
                      ch.record_pos.begin() + static_cast<std::ptrdiff_t>(drop));
  for (auto& p : ch.record_pos) p -= skip;
  ch.file_size -= skip;
  ch.base = new_base;
}

void LogBroker::inject_write_failures(int n) { failures_ = n; }

std::uint64_t LogBroker::bytes_written() const { return bytes_written_; }

void to_json(nlohmann::json& j, const SubscriberPosition& p) {
  j = {{"channel", p.channel},
       {"next_offset", p.next_offset},
       {"last_time_tick", p.last_time_tick.raw()}};
}

void from_json(const nlohmann::json& j, SubscriberPosition& p) {
  p.channel = j.at("channel").get<std::string>();
  p.next_offset = j.at("next_offset").get<std::uint64_t>();
  p.last_time_tick = HlcTimestamp::from_raw(j.at("last_time_tick").get<std::uint64_t>());
}

Subscription::Subscription(const LogBroker& broker, SubscriberPosition start)
    : broker_(&broker), pos_(std::move(start)) {
  const auto end = broker.end_offset(pos_.channel);
  if (pos_.next_offset > end) {
    throw Error(ErrorCode::kInvalidArgument, "subscription starts past the end of " + pos_.channel);
  }
  if (pos_.next_offset < broker.base_offset(pos_.channel)) {
    throw Error(ErrorCode::kHistoryExpired, "subscription starts in truncated prefix of " + pos_.channel);
  }
}

LogEntry Subscription::take() {
  auto e = broker_->read(pos_.channel, pos_.next_offset);
  ++pos_.next_offset;
  if (e.kind == EntryKind::kTimeTick && e.timestamp > pos_.last_time_tick) {
    pos_.last_time_tick = e.timestamp;
  }
  return e;
}

std::optional<LogEntry> Subscription::poll() {
  if (caught_up()) return std::nullopt;
  return take();
}

std::optional<LogEntry> Subscription::next(std::chrono::milliseconds timeout) {
  if (!broker_->wait_for(pos_.channel, pos_.next_offset, timeout)) return std::nullopt;
  return take();
}

bool Subscription::caught_up() const {
  return pos_.next_offset >= broker_->end_offset(pos_.channel);
}

ChannelWriter::ChannelWriter(LogBroker& broker, Tso& tso, std::string channel)
    : broker_(broker), tso_(tso), channel_(std::move(channel)) {
  broker_.create_channel(channel_);
}

ChannelWriter::Appended ChannelWriter::append(const std::function<LogEntry(HlcTimestamp)>& make) {
  std::lock_guard lock(mu_);
  const auto ts = tso_.allocate();
  auto entry = make(ts);
  entry.timestamp = ts;
  return {ts, broker_.publish(channel_, entry)};
}

ChannelWriter::Appended ChannelWriter::tick() {
  std::lock_guard lock(mu_);
  const auto ts = tso_.allocate();
  return {ts, broker_.publish(channel_, LogEntry::time_tick(ts))};
}

std::uint64_t publish_stamped(LogBroker& broker, Tso& tso, const std::string& channel,
                              LogEntry entry) {
  entry.timestamp = tso.allocate();
  return broker.publish(channel, entry);
}

}  // namespace logvec
