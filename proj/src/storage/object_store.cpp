#include "logvec/storage/object_store.hpp"

#include <fstream>
#include <unistd.h>

namespace logvec {

namespace fs = std::filesystem;

namespace {

void check_key(const std::string& key) {
  if (key.empty() || key.front() == '/' || key.find("..") != std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "bad object key: " + key);
  }
}

}  // namespace

ObjectStore::ObjectStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

fs::path ObjectStore::path_of(const std::string& key) const {
  check_key(key);
  return root_ / key;
}

void ObjectStore::put(const std::string& key, std::span<const std::uint8_t> bytes) {
  const auto path = path_of(key);
  if (put_failures_.load() > 0 && put_failures_.fetch_sub(1) > 0) {
    throw Error(ErrorCode::kIo, "injected object store failure: " + key);
  }
  fs::create_directories(path.parent_path());
  // Unique temp name so concurrent writers of one key never share a file.
  static std::atomic<std::uint64_t> seq{0};
  auto tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(seq++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error(ErrorCode::kIo, "write failed: " + key);
    }
  }
  fs::rename(tmp, path);
  bytes_written_ += bytes.size();
}

void ObjectStore::put(const std::string& key, const std::string& text) {
  put(key, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> ObjectStore::get(const std::string& key) const {
  const auto path = path_of(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "no object " + key);
  std::vector<std::uint8_t> out{std::istreambuf_iterator<char>(in), {}};
  bytes_read_ += out.size();
  return out;
}

std::string ObjectStore::get_text(const std::string& key) const {
  auto b = get(key);
  return {b.begin(), b.end()};
}

std::vector<std::uint8_t> ObjectStore::get_range(const std::string& key, std::uint64_t offset,
                                                 std::uint64_t length) const {
  const auto path = path_of(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "no object " + key);
  const auto total = fs::file_size(path);
  if (offset + length > total) throw Error(ErrorCode::kCorrupt, "range past end of " + key);
  std::vector<std::uint8_t> out(length);
  in.seekg(static_cast<std::streamoff>(offset));
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(length));
  bytes_read_ += length;
  return out;
}

bool ObjectStore::exists(const std::string& key) const { return fs::is_regular_file(path_of(key)); }

std::uint64_t ObjectStore::size(const std::string& key) const {
  const auto path = path_of(key);
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::kNotFound, "no object " + key);
  return fs::file_size(path);
}

std::vector<std::string> ObjectStore::list(const std::string& prefix) const {
  std::vector<std::string> out;
  if (!fs::exists(root_)) return out;
  for (const auto& it : fs::recursive_directory_iterator(root_)) {
    if (!it.is_regular_file()) continue;
    auto key = fs::relative(it.path(), root_).generic_string();
    if (key.find(".tmp-") != std::string::npos) continue;
    if (key.compare(0, prefix.size(), prefix) == 0) out.push_back(std::move(key));
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool ObjectStore::remove(const std::string& key) {
  std::error_code ec;
  return fs::remove(path_of(key), ec);
}

std::string collection_prefix(CollectionId collection) {
  return "collection/" + std::to_string(collection) + "/";
}

std::string segment_key(CollectionId collection, SegmentId segment, const std::string& kind) {
  return collection_prefix(collection) + "segment/" + std::to_string(segment) + "/" + kind;
}

}  // namespace logvec
