#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "logvec/core/schema.hpp"
#include "logvec/core/segment.hpp"
#include "logvec/index/bitmap.hpp"

namespace logvec {

enum class CompareOp : std::uint8_t { kEq, kNe, kLt, kLe, kGt, kGe };

// Boolean expression over label and numeric fields, e.g.
//   price < 100 AND (color = 'red' OR NOT size >= 3)
// Labels allow = and != against a quoted string; numerics allow every
// comparison against a number. Keywords are case-insensitive and also spelled
// && || !.
class FilterExpr {
 public:
  struct Compare {
    std::string field;
    CompareOp op;
    std::variant<std::string, double> constant;
  };
  struct Node;
  using NodePtr = std::shared_ptr<const Node>;
  struct Node {
    enum class Kind : std::uint8_t { kCompare, kAnd, kOr, kNot } kind;
    Compare cmp;
    std::vector<NodePtr> children;
  };

  // Throws kInvalidArgument on a syntax error.
  static FilterExpr parse(const std::string& text);

  // Throws kInvalidArgument when a field is unknown or the comparison does
  // not fit the field's type.
  void check(const Schema& schema) const;

  // Predicate over rows of `columns`. The columns must outlive it.
  RowPredicate bind(const Schema& schema, const SegmentColumns& columns) const;

  bool matches(const Schema& schema, const Entity& e) const;

  const std::string& text() const { return text_; }
  const Node& root() const { return *root_; }

 private:
  std::string text_;
  NodePtr root_;
};

}  // namespace logvec
