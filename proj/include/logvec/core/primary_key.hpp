#pragma once

#include <cstdint>
#include <string>
#include <variant>

#include "logvec/core/bytes.hpp"

namespace logvec {

// Integer or string primary key. The variant's built-in ordering (all
// integers before all strings, then by value) is the tie-break order used
// when merging results.
using PrimaryKey = std::variant<std::int64_t, std::string>;

enum class PkType : std::uint8_t { kInt64 = 0, kString = 1 };

inline bool pk_is_int(const PrimaryKey& pk) { return pk.index() == 0; }

// Platform-independent hash; routing must not depend on std::hash.
std::uint64_t pk_hash(const PrimaryKey& pk);

std::string pk_to_string(const PrimaryKey& pk);

void write_pk(ByteWriter& w, const PrimaryKey& pk);
PrimaryKey read_pk(ByteReader& r);

struct PrimaryKeyHash {
  std::size_t operator()(const PrimaryKey& pk) const {
    return static_cast<std::size_t>(pk_hash(pk));
  }
};

}  // namespace logvec
