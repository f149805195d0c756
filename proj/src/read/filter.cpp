#include "logvec/read/filter.hpp"

#include <cctype>
#include <functional>

#include "logvec/core/error.hpp"

namespace logvec {

namespace {

struct Token {
  enum class Kind { kIdent, kString, kNumber, kOp, kAnd, kOr, kNot, kLParen, kRParen, kEnd } kind;
  std::string text;
  double number = 0;
  CompareOp op = CompareOp::kEq;
};

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

[[noreturn]] void syntax(const std::string& text, std::size_t at, const std::string& what) {
  throw Error(ErrorCode::kInvalidArgument,
              "filter '" + text + "': " + what + " at position " + std::to_string(at));
}

std::vector<std::pair<Token, std::size_t>> tokenize(const std::string& s) {
  std::vector<std::pair<Token, std::size_t>> out;
  std::size_t i = 0;
  auto push = [&](Token t, std::size_t at) { out.emplace_back(std::move(t), at); };
  while (i < s.size()) {
    const char c = s[i];
    const std::size_t at = i;
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '(') {
      push({Token::Kind::kLParen, "("}, at), ++i;
    } else if (c == ')') {
      push({Token::Kind::kRParen, ")"}, at), ++i;
    } else if (c == '\'' || c == '"') {
      std::string v;
      ++i;
      while (i < s.size() && s[i] != c) {
        if (s[i] == '\\' && i + 1 < s.size()) ++i;
        v += s[i++];
      }
      if (i >= s.size()) syntax(s, at, "unterminated string");
      ++i;
      push({Token::Kind::kString, v}, at);
    } else if (c == '&' || c == '|') {
      if (i + 1 >= s.size() || s[i + 1] != c) syntax(s, at, "stray '" + std::string(1, c) + "'");
      push({c == '&' ? Token::Kind::kAnd : Token::Kind::kOr, std::string(2, c)}, at);
      i += 2;
    } else if (c == '=' || c == '!' || c == '<' || c == '>') {
      const bool eq_next = i + 1 < s.size() && s[i + 1] == '=';
      Token t{Token::Kind::kOp, ""};
      if (c == '=') {
        t.op = CompareOp::kEq;
        i += eq_next ? 2 : 1;
      } else if (c == '!') {
        if (eq_next) {
          t.op = CompareOp::kNe;
          i += 2;
        } else {
          push({Token::Kind::kNot, "!"}, at), ++i;
          continue;
        }
      } else if (c == '<') {
        if (i + 1 < s.size() && s[i + 1] == '>') {
          t.op = CompareOp::kNe;
          i += 2;
        } else {
          t.op = eq_next ? CompareOp::kLe : CompareOp::kLt;
          i += eq_next ? 2 : 1;
        }
      } else {
        t.op = eq_next ? CompareOp::kGe : CompareOp::kGt;
        i += eq_next ? 2 : 1;
      }
      t.text = s.substr(at, i - at);
      push(std::move(t), at);
    } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') {
      std::size_t j = i + 1;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '.' ||
                              ((s[j] == '-' || s[j] == '+') && (s[j - 1] == 'e' || s[j - 1] == 'E')))) {
        ++j;
      }
      const std::string lit = s.substr(i, j - i);
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(lit, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != lit.size()) syntax(s, at, "bad number '" + lit + "'");
      Token t{Token::Kind::kNumber, lit};
      t.number = v;
      push(std::move(t), at);
      i = j;
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i + 1;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
      std::string word = s.substr(i, j - i);
      const auto up = upper(word);
      if (up == "AND") {
        push({Token::Kind::kAnd, word}, at);
      } else if (up == "OR") {
        push({Token::Kind::kOr, word}, at);
      } else if (up == "NOT") {
        push({Token::Kind::kNot, word}, at);
      } else {
        push({Token::Kind::kIdent, word}, at);
      }
      i = j;
    } else {
      syntax(s, at, "unexpected character '" + std::string(1, c) + "'");
    }
  }
  push({Token::Kind::kEnd, ""}, s.size());
  return out;
}

class Parser {
 public:
  explicit Parser(const std::string& text) : text_(text), tokens_(tokenize(text)) {}

  FilterExpr::NodePtr parse() {
    auto n = parse_or();
    if (peek().kind != Token::Kind::kEnd) syntax(text_, at(), "unexpected '" + peek().text + "'");
    return n;
  }

 private:
  using Node = FilterExpr::Node;

  const Token& peek() const { return tokens_[pos_].first; }
  std::size_t at() const { return tokens_[pos_].second; }
  Token take() { return tokens_[pos_++].first; }

  FilterExpr::NodePtr combine(Node::Kind kind, std::vector<FilterExpr::NodePtr> children) {
    if (children.size() == 1) return children.front();
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->children = std::move(children);
    return n;
  }

  FilterExpr::NodePtr parse_or() {
    std::vector<FilterExpr::NodePtr> parts{parse_and()};
    while (peek().kind == Token::Kind::kOr) {
      take();
      parts.push_back(parse_and());
    }
    return combine(Node::Kind::kOr, std::move(parts));
  }

  FilterExpr::NodePtr parse_and() {
    std::vector<FilterExpr::NodePtr> parts{parse_not()};
    while (peek().kind == Token::Kind::kAnd) {
      take();
      parts.push_back(parse_not());
    }
    return combine(Node::Kind::kAnd, std::move(parts));
  }

  FilterExpr::NodePtr parse_not() {
    if (peek().kind == Token::Kind::kNot) {
      take();
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::kNot;
      n->children.push_back(parse_not());
      return n;
    }
    return parse_primary();
  }

  FilterExpr::NodePtr parse_primary() {
    if (peek().kind == Token::Kind::kLParen) {
      take();
      auto n = parse_or();
      if (peek().kind != Token::Kind::kRParen) syntax(text_, at(), "expected ')'");
      take();
      return n;
    }
    if (peek().kind != Token::Kind::kIdent) syntax(text_, at(), "expected a field name");
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::kCompare;
    n->cmp.field = take().text;
    if (peek().kind != Token::Kind::kOp) syntax(text_, at(), "expected a comparison operator");
    n->cmp.op = take().op;
    const auto& t = peek();
    if (t.kind == Token::Kind::kString) {
      n->cmp.constant = take().text;
    } else if (t.kind == Token::Kind::kNumber) {
      n->cmp.constant = take().number;
    } else {
      syntax(text_, at(), "expected a constant");
    }
    return n;
  }

  const std::string& text_;
  std::vector<std::pair<Token, std::size_t>> tokens_;
  std::size_t pos_ = 0;
};

template <typename T>
bool compare(CompareOp op, const T& a, const T& b) {
  switch (op) {
    case CompareOp::kEq: return a == b;
    case CompareOp::kNe: return a != b;
    case CompareOp::kLt: return a < b;
    case CompareOp::kLe: return a <= b;
    case CompareOp::kGt: return a > b;
    case CompareOp::kGe: return a >= b;
  }
  return false;
}

// Reads the label or numeric value a comparison refers to for one row.
struct FieldAccess {
  std::function<const std::string&(std::uint32_t)> label;
  std::function<double(std::uint32_t)> numeric;
};

using RowEval = std::function<bool(std::uint32_t)>;

RowEval compile(const FilterExpr::Node& n, const Schema& schema,
                const std::function<FieldAccess(const FilterExpr::Compare&)>& access) {
  using Kind = FilterExpr::Node::Kind;
  switch (n.kind) {
    case Kind::kCompare: {
      auto fa = access(n.cmp);
      const auto op = n.cmp.op;
      if (fa.label) {
        return [get = std::move(fa.label), op, c = std::get<std::string>(n.cmp.constant)](std::uint32_t r) {
          return compare(op, get(r), c);
        };
      }
      return [get = std::move(fa.numeric), op, c = std::get<double>(n.cmp.constant)](std::uint32_t r) {
        return compare(op, get(r), c);
      };
    }
    case Kind::kNot:
      return [inner = compile(*n.children.front(), schema, access)](std::uint32_t r) { return !inner(r); };
    case Kind::kAnd:
    case Kind::kOr: {
      std::vector<RowEval> parts;
      for (const auto& c : n.children) parts.push_back(compile(*c, schema, access));
      const bool is_and = n.kind == Kind::kAnd;
      return [parts = std::move(parts), is_and](std::uint32_t r) {
        for (const auto& p : parts) {
          if (p(r) != is_and) return !is_and;
        }
        return is_and;
      };
    }
  }
  return [](std::uint32_t) { return false; };
}

}  // namespace

FilterExpr FilterExpr::parse(const std::string& text) {
  FilterExpr f;
  f.text_ = text;
  f.root_ = Parser(f.text_).parse();
  return f;
}

void FilterExpr::check(const Schema& schema) const {
  std::function<void(const Node&)> walk = [&](const Node& n) {
    for (const auto& c : n.children) walk(*c);
    if (n.kind != Node::Kind::kCompare) return;
    const auto& c = n.cmp;
    if (schema.find_label_field(c.field)) {
      if (c.op != CompareOp::kEq && c.op != CompareOp::kNe) {
        throw Error(ErrorCode::kInvalidArgument, "label field '" + c.field + "' only supports = and !=");
      }
      if (!std::holds_alternative<std::string>(c.constant)) {
        throw Error(ErrorCode::kInvalidArgument, "label field '" + c.field + "' compared with a number");
      }
    } else if (schema.find_numeric_field(c.field)) {
      if (!std::holds_alternative<double>(c.constant)) {
        throw Error(ErrorCode::kInvalidArgument, "numeric field '" + c.field + "' compared with a string");
      }
    } else {
      throw Error(ErrorCode::kInvalidArgument, "filter names unknown field '" + c.field + "'");
    }
  };
  walk(*root_);
}

RowPredicate FilterExpr::bind(const Schema& schema, const SegmentColumns& columns) const {
  check(schema);
  auto access = [&](const Compare& c) {
    FieldAccess fa;
    if (auto l = schema.find_label_field(c.field)) {
      const auto* col = &columns.labels[*l];
      fa.label = [col](std::uint32_t r) -> const std::string& { return (*col)[r]; };
    } else {
      const auto* col = &columns.numerics[*schema.find_numeric_field(c.field)];
      fa.numeric = [col](std::uint32_t r) { return numeric_as_double((*col)[r]); };
    }
    return fa;
  };
  return compile(*root_, schema, access);
}

bool FilterExpr::matches(const Schema& schema, const Entity& e) const {
  check(schema);
  auto access = [&](const Compare& c) {
    FieldAccess fa;
    if (auto l = schema.find_label_field(c.field)) {
      const auto* v = &e.labels.at(*l);
      fa.label = [v](std::uint32_t) -> const std::string& { return *v; };
    } else {
      const double v = numeric_as_double(e.numerics.at(*schema.find_numeric_field(c.field)));
      fa.numeric = [v](std::uint32_t) { return v; };
    }
    return fa;
  };
  return compile(*root_, schema, access)(0);
}

}  // namespace logvec
