#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "logvec/core/bytes.hpp"
#include "logvec/core/hlc.hpp"
#include "logvec/core/primary_key.hpp"

namespace logvec {

enum class NumericType : std::uint8_t { kInt64 = 0, kFloat32 = 1 };

using NumericValue = std::variant<std::int64_t, float>;

inline double numeric_as_double(const NumericValue& v) {
  return std::visit([](auto x) { return static_cast<double>(x); }, v);
}

struct VectorField {
  std::string name;
  std::uint32_t dim = 0;
};

struct LabelField {
  std::string name;
};

struct NumericField {
  std::string name;
  NumericType type = NumericType::kFloat32;
};

// Field ids are positional: 0 is the primary key, then vector fields, label
// fields and numeric fields in declaration order. The lsn column uses
// kLsnFieldId.
struct Schema {
  static constexpr std::uint32_t kLsnFieldId = 0xFFFF;

  std::string pk_name = "id";
  PkType pk_type = PkType::kInt64;
  bool auto_pk = false;
  std::vector<VectorField> vector_fields;
  std::vector<LabelField> label_fields;
  std::vector<NumericField> numeric_fields;

  // Throws kInvalidArgument on duplicate names, missing vector field or zero
  // dimension.
  void check() const;

  std::uint32_t vector_field_id(std::size_t i) const { return 1 + static_cast<std::uint32_t>(i); }
  std::uint32_t label_field_id(std::size_t i) const {
    return 1 + static_cast<std::uint32_t>(vector_fields.size() + i);
  }
  std::uint32_t numeric_field_id(std::size_t i) const {
    return 1 + static_cast<std::uint32_t>(vector_fields.size() + label_fields.size() + i);
  }
  std::size_t field_count() const {
    return 1 + vector_fields.size() + label_fields.size() + numeric_fields.size();
  }

  std::optional<std::size_t> find_vector_field(const std::string& name) const;
  std::optional<std::size_t> find_label_field(const std::string& name) const;
  std::optional<std::size_t> find_numeric_field(const std::string& name) const;

  // Bytes one row occupies in a growing buffer; drives the size seal trigger.
  std::uint64_t row_bytes(const struct Entity& e) const;

  nlohmann::json to_json() const;
  static Schema from_json(const nlohmann::json& j);

  friend bool operator==(const Schema&, const Schema&) = default;
};

inline bool operator==(const VectorField& a, const VectorField& b) {
  return a.name == b.name && a.dim == b.dim;
}
inline bool operator==(const LabelField& a, const LabelField& b) { return a.name == b.name; }
inline bool operator==(const NumericField& a, const NumericField& b) {
  return a.name == b.name && a.type == b.type;
}

// One row. Values are positional per schema field order.
struct Entity {
  std::optional<PrimaryKey> pk;
  std::vector<std::vector<float>> vectors;
  std::vector<std::string> labels;
  std::vector<NumericValue> numerics;
  HlcTimestamp lsn;
};

void write_entity(ByteWriter& w, const Entity& e);
Entity read_entity(ByteReader& r);

struct ValidationResult {
  std::vector<std::string> violations;
  bool auto_pk_assigned = false;

  bool ok() const { return violations.empty(); }
};

// Collects every schema violation. A missing pk under an auto-pk schema is
// not a violation; the caller assigns one from the TSO.
ValidationResult validate_entity(const Schema& schema, const Entity& e);

}  // namespace logvec
