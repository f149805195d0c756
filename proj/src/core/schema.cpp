#include "logvec/core/schema.hpp"

#include <set>

#include "logvec/core/error.hpp"

namespace logvec {

void Schema::check() const {
  std::set<std::string> names{pk_name};
  auto add = [&](const std::string& n) {
    if (n.empty()) throw Error(ErrorCode::kInvalidArgument, "empty field name");
    if (!names.insert(n).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate field name: " + n);
    }
  };
  if (pk_name.empty()) throw Error(ErrorCode::kInvalidArgument, "empty primary key name");
  if (auto_pk && pk_type != PkType::kInt64) {
    throw Error(ErrorCode::kInvalidArgument, "auto primary key must be an integer");
  }
  if (vector_fields.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "schema needs at least one vector field");
  }
  for (const auto& f : vector_fields) {
    add(f.name);
    if (f.dim < 1) throw Error(ErrorCode::kInvalidArgument, "dimension must be >= 1: " + f.name);
  }
  for (const auto& f : label_fields) add(f.name);
  for (const auto& f : numeric_fields) add(f.name);
}

std::optional<std::size_t> Schema::find_vector_field(const std::string& name) const {
  for (std::size_t i = 0; i < vector_fields.size(); ++i) {
    if (vector_fields[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> Schema::find_label_field(const std::string& name) const {
  for (std::size_t i = 0; i < label_fields.size(); ++i) {
    if (label_fields[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> Schema::find_numeric_field(const std::string& name) const {
  for (std::size_t i = 0; i < numeric_fields.size(); ++i) {
    if (numeric_fields[i].name == name) return i;
  }
  return std::nullopt;
}

std::uint64_t Schema::row_bytes(const Entity& e) const {
  std::uint64_t bytes = 8 + 8;  // pk slot + lsn
  if (e.pk && !pk_is_int(*e.pk)) bytes += std::get<std::string>(*e.pk).size();
  for (const auto& f : vector_fields) bytes += 4ULL * f.dim;
  for (const auto& l : e.labels) bytes += 4 + l.size();
  bytes += 8ULL * numeric_fields.size();
  return bytes;
}

nlohmann::json Schema::to_json() const {
  nlohmann::json j;
  j["pk"] = {{"name", pk_name},
             {"type", pk_type == PkType::kInt64 ? "int64" : "string"},
             {"auto", auto_pk}};
  j["vectors"] = nlohmann::json::array();
  for (const auto& f : vector_fields) j["vectors"].push_back({{"name", f.name}, {"dim", f.dim}});
  j["labels"] = nlohmann::json::array();
  for (const auto& f : label_fields) j["labels"].push_back({{"name", f.name}});
  j["numerics"] = nlohmann::json::array();
  for (const auto& f : numeric_fields) {
    j["numerics"].push_back(
        {{"name", f.name}, {"type", f.type == NumericType::kInt64 ? "int64" : "float"}});
  }
  return j;
}

Schema Schema::from_json(const nlohmann::json& j) {
  Schema s;
  try {
    if (j.contains("pk")) {
      const auto& pk = j.at("pk");
      s.pk_name = pk.value("name", std::string("id"));
      s.pk_type = pk.value("type", std::string("int64")) == "string" ? PkType::kString
                                                                     : PkType::kInt64;
      s.auto_pk = pk.value("auto", false);
    }
    for (const auto& f : j.at("vectors")) {
      s.vector_fields.push_back({f.at("name").get<std::string>(), f.at("dim").get<std::uint32_t>()});
    }
    if (j.contains("labels")) {
      for (const auto& f : j.at("labels")) s.label_fields.push_back({f.at("name").get<std::string>()});
    }
    if (j.contains("numerics")) {
      for (const auto& f : j.at("numerics")) {
        s.numeric_fields.push_back({f.at("name").get<std::string>(),
                                    f.value("type", std::string("float")) == "int64"
                                        ? NumericType::kInt64
                                        : NumericType::kFloat32});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bad schema: ") + e.what());
  }
  s.check();
  return s;
}

void write_entity(ByteWriter& w, const Entity& e) {
  w.u8(e.pk ? 1 : 0);
  if (e.pk) write_pk(w, *e.pk);
  w.u32(static_cast<std::uint32_t>(e.vectors.size()));
  for (const auto& v : e.vectors) {
    w.u32(static_cast<std::uint32_t>(v.size()));
    w.f32s(v);
  }
  w.u32(static_cast<std::uint32_t>(e.labels.size()));
  for (const auto& l : e.labels) w.str(l);
  w.u32(static_cast<std::uint32_t>(e.numerics.size()));
  for (const auto& n : e.numerics) {
    if (const auto* i = std::get_if<std::int64_t>(&n)) {
      w.u8(0);
      w.i64(*i);
    } else {
      w.u8(1);
      w.f32(std::get<float>(n));
    }
  }
  w.u64(e.lsn.raw());
}

Entity read_entity(ByteReader& r) {
  Entity e;
  if (r.u8()) e.pk = read_pk(r);
  e.vectors.resize(r.u32());
  for (auto& v : e.vectors) {
    v.resize(r.u32());
    r.f32s(v);
  }
  e.labels.resize(r.u32());
  for (auto& l : e.labels) l = r.str();
  e.numerics.resize(r.u32());
  for (auto& n : e.numerics) {
    if (r.u8() == 0) {
      n = r.i64();
    } else {
      n = r.f32();
    }
  }
  e.lsn = HlcTimestamp::from_raw(r.u64());
  return e;
}

ValidationResult validate_entity(const Schema& schema, const Entity& e) {
  ValidationResult res;
  if (!e.pk) {
    if (schema.auto_pk) {
      res.auto_pk_assigned = true;
    } else {
      res.violations.push_back("missing field: " + schema.pk_name);
    }
  } else if (static_cast<PkType>(e.pk->index()) != schema.pk_type) {
    res.violations.push_back("wrong type: " + schema.pk_name);
  }

  for (std::size_t i = 0; i < schema.vector_fields.size(); ++i) {
    const auto& f = schema.vector_fields[i];
    if (i >= e.vectors.size()) {
      res.violations.push_back("missing field: " + f.name);
    } else if (e.vectors[i].size() != f.dim) {
      res.violations.push_back("dimension mismatch: " + f.name + " expects " +
                               std::to_string(f.dim) + ", got " +
                               std::to_string(e.vectors[i].size()));
    }
  }
  if (e.vectors.size() > schema.vector_fields.size()) {
    res.violations.push_back("unexpected vector values");
  }

  for (std::size_t i = e.labels.size(); i < schema.label_fields.size(); ++i) {
    res.violations.push_back("missing field: " + schema.label_fields[i].name);
  }
  if (e.labels.size() > schema.label_fields.size()) {
    res.violations.push_back("unexpected label values");
  }

  for (std::size_t i = 0; i < schema.numeric_fields.size(); ++i) {
    const auto& f = schema.numeric_fields[i];
    if (i >= e.numerics.size()) {
      res.violations.push_back("missing field: " + f.name);
      continue;
    }
    const bool is_int = std::holds_alternative<std::int64_t>(e.numerics[i]);
    if (is_int != (f.type == NumericType::kInt64)) {
      res.violations.push_back("wrong type: " + f.name);
    }
  }
  if (e.numerics.size() > schema.numeric_fields.size()) {
    res.violations.push_back("unexpected numeric values");
  }
  return res;
}

}  // namespace logvec
