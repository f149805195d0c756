#include "logvec/core/primary_key.hpp"

namespace logvec {
namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

}  // namespace

std::uint64_t pk_hash(const PrimaryKey& pk) {
  if (const auto* i = std::get_if<std::int64_t>(&pk)) {
    return mix64(static_cast<std::uint64_t>(*i));
  }
  return fnv1a(std::get<std::string>(pk));
}

std::string pk_to_string(const PrimaryKey& pk) {
  if (const auto* i = std::get_if<std::int64_t>(&pk)) return std::to_string(*i);
  return std::get<std::string>(pk);
}

void write_pk(ByteWriter& w, const PrimaryKey& pk) {
  if (const auto* i = std::get_if<std::int64_t>(&pk)) {
    w.u8(static_cast<std::uint8_t>(PkType::kInt64));
    w.i64(*i);
  } else {
    w.u8(static_cast<std::uint8_t>(PkType::kString));
    w.str(std::get<std::string>(pk));
  }
}

PrimaryKey read_pk(ByteReader& r) {
  auto tag = r.u8();
  if (tag == static_cast<std::uint8_t>(PkType::kInt64)) return r.i64();
  if (tag == static_cast<std::uint8_t>(PkType::kString)) return r.str();
  throw Error(ErrorCode::kCorrupt, "bad primary key tag");
}

}  // namespace logvec
