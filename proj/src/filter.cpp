#include "clusterscope/filter.hpp"

#include <charconv>
#include <cmath>
#include <system_error>

#include "clusterscope/error.hpp"

namespace clusterscope::filter {

std::string_view to_symbol(CompareOp op) noexcept {
  switch (op) {
    case CompareOp::GT: return ">";
    case CompareOp::GE: return ">=";
    case CompareOp::LT: return "<";
    case CompareOp::LE: return "<=";
    case CompareOp::EQ: return "==";
    case CompareOp::NE: return "!=";
  }
  return "?";
}

FilterExpr::FilterExpr(ExprPtr root) : root_(std::move(root)) {
  if (!root_) throw Error(ErrorCode::Validation, "filter expression must not be null");
}

namespace {

void collect_identifiers(const Expr& e, std::vector<std::string>& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Comparison>) {
          for (const auto& s : out)
            if (s == n.feature) return;
          out.push_back(n.feature);
        } else if constexpr (std::is_same_v<T, Not>) {
          collect_identifiers(*n.inner, out);
        } else {
          collect_identifiers(*n.left, out);
          collect_identifiers(*n.right, out);
        }
      },
      e.node);
}

}  // namespace

std::vector<std::string> FilterExpr::identifiers() const {
  std::vector<std::string> out;
  collect_identifiers(*root_, out);
  return out;
}

bool operator==(const FilterExpr& a, const FilterExpr& b) {
  return structurally_equal(a.root(), b.root());
}

ExprPtr make_comparison(std::string feature, CompareOp op, Value literal) {
  return std::make_shared<const Expr>(Expr{Comparison{std::move(feature), op, std::move(literal)}});
}
ExprPtr make_and(ExprPtr left, ExprPtr right) {
  return std::make_shared<const Expr>(Expr{And{std::move(left), std::move(right)}});
}
ExprPtr make_or(ExprPtr left, ExprPtr right) {
  return std::make_shared<const Expr>(Expr{Or{std::move(left), std::move(right)}});
}
ExprPtr make_not(ExprPtr inner) {
  return std::make_shared<const Expr>(Expr{Not{std::move(inner)}});
}

bool structurally_equal(const Expr& a, const Expr& b) {
  if (a.node.index() != b.node.index()) return false;
  if (const auto* ca = std::get_if<Comparison>(&a.node)) {
    const auto& cb = std::get<Comparison>(b.node);
    return ca->feature == cb.feature && ca->op == cb.op && ca->literal == cb.literal;
  }
  if (const auto* na = std::get_if<Not>(&a.node))
    return structurally_equal(*na->inner, *std::get<Not>(b.node).inner);
  if (const auto* aa = std::get_if<And>(&a.node)) {
    const auto& ab = std::get<And>(b.node);
    return structurally_equal(*aa->left, *ab.left) && structurally_equal(*aa->right, *ab.right);
  }
  const auto& oa = std::get<Or>(a.node);
  const auto& ob = std::get<Or>(b.node);
  return structurally_equal(*oa.left, *ob.left) && structurally_equal(*oa.right, *ob.right);
}

// ---------------------------------------------------------------------------
// Parser

namespace {

bool is_ident_start(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
}
bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

enum class Tok { Ident, QuotedString, Number, Op, And, Or, Not, LParen, RParen, End };

struct Token {
  Tok kind;
  std::size_t offset;
  std::string text;  // identifier name, unescaped string, or operator
  double number = 0.0;
  CompareOp op = CompareOp::EQ;
};

const std::vector<std::string> kUnaryStart = {"!", "(", "identifier"};
const std::vector<std::string> kOperators = {">", ">=", "<", "<=", "==", "!="};
const std::vector<std::string> kLiterals = {"number", "string"};

class Lexer {
 public:
  explicit Lexer(std::string_view in) : in_(in) {}

  Token next() {
    while (pos_ < in_.size() && is_space(in_[pos_])) ++pos_;
    Token t{Tok::End, pos_, {}};
    if (pos_ >= in_.size()) return t;
    const char c = in_[pos_];
    if (is_ident_start(c)) {
      const std::size_t start = pos_;
      while (pos_ < in_.size() && is_ident_char(in_[pos_])) ++pos_;
      t.kind = Tok::Ident;
      t.text = std::string(in_.substr(start, pos_ - start));
      return t;
    }
    if (c == '"') return lex_string();
    if (is_digit(c) || c == '.' || c == '+' || c == '-') return lex_number();
    switch (c) {
      case '&': ++pos_; t.kind = Tok::And; return t;
      case '|': ++pos_; t.kind = Tok::Or; return t;
      case '(': ++pos_; t.kind = Tok::LParen; return t;
      case ')': ++pos_; t.kind = Tok::RParen; return t;
      case '>':
      case '<': {
        const bool eq = pos_ + 1 < in_.size() && in_[pos_ + 1] == '=';
        t.kind = Tok::Op;
        t.op = c == '>' ? (eq ? CompareOp::GE : CompareOp::GT) : (eq ? CompareOp::LE : CompareOp::LT);
        pos_ += eq ? 2 : 1;
        return t;
      }
      case '=':
        if (pos_ + 1 < in_.size() && in_[pos_ + 1] == '=') {
          pos_ += 2;
          t.kind = Tok::Op;
          t.op = CompareOp::EQ;
          return t;
        }
        throw ParseError(pos_, "unexpected '='; did you mean '=='?", kOperators);
      case '!':
        if (pos_ + 1 < in_.size() && in_[pos_ + 1] == '=') {
          pos_ += 2;
          t.kind = Tok::Op;
          t.op = CompareOp::NE;
          return t;
        }
        ++pos_;
        t.kind = Tok::Not;
        return t;
      default:
        break;
    }
    throw ParseError(pos_, std::string("unexpected character '") + c + "'", {});
  }

 private:
  Token lex_string() {
    Token t{Tok::QuotedString, pos_, {}};
    ++pos_;
    while (pos_ < in_.size()) {
      const char c = in_[pos_++];
      if (c == '"') return t;
      if (c == '\\') {
        if (pos_ >= in_.size()) break;
        t.text.push_back(in_[pos_++]);
        continue;
      }
      t.text.push_back(c);
    }
    throw ParseError(t.offset, "unterminated string", {"\""});
  }

  Token lex_number() {
    Token t{Tok::Number, pos_, {}};
    std::size_t p = pos_;
    if (in_[p] == '+' || in_[p] == '-') ++p;
    const std::size_t digits_start = p;
    while (p < in_.size() && is_digit(in_[p])) ++p;
    std::size_t mantissa_digits = p - digits_start;
    if (p < in_.size() && in_[p] == '.') {
      ++p;
      const std::size_t frac_start = p;
      while (p < in_.size() && is_digit(in_[p])) ++p;
      mantissa_digits += p - frac_start;
    }
    if (mantissa_digits == 0) throw ParseError(pos_, "malformed number", kLiterals);
    if (p < in_.size() && (in_[p] == 'e' || in_[p] == 'E')) {
      std::size_t q = p + 1;
      if (q < in_.size() && (in_[q] == '+' || in_[q] == '-')) ++q;
      const std::size_t exp_start = q;
      while (q < in_.size() && is_digit(in_[q])) ++q;
      if (q == exp_start) throw ParseError(q, "malformed exponent", {"digit"});
      p = q;
    }
    std::string_view text = in_.substr(pos_, p - pos_);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(value))
      throw ParseError(pos_, "number out of range", kLiterals);
    t.number = value;
    t.text = std::string(in_.substr(pos_, p - pos_));
    pos_ = p;
    return t;
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view in) : lexer_(in) { advance(); }

  ExprPtr parse_all() {
    if (cur_.kind == Tok::End) throw ParseError(cur_.offset, "empty input", kUnaryStart);
    ExprPtr e = parse_or();
    if (cur_.kind != Tok::End)
      throw ParseError(cur_.offset, "unexpected token", {"&", "|", "end of input"});
    return e;
  }

 private:
  void advance() { cur_ = lexer_.next(); }

  ExprPtr parse_or() {
    ExprPtr left = parse_and();
    while (cur_.kind == Tok::Or) {
      advance();
      left = make_or(std::move(left), parse_and());
    }
    return left;
  }

  ExprPtr parse_and() {
    ExprPtr left = parse_unary();
    while (cur_.kind == Tok::And) {
      advance();
      left = make_and(std::move(left), parse_unary());
    }
    return left;
  }

  ExprPtr parse_unary() {
    if (cur_.kind == Tok::Not) {
      advance();
      return make_not(parse_unary());
    }
    if (cur_.kind == Tok::LParen) {
      advance();
      ExprPtr inner = parse_or();
      if (cur_.kind != Tok::RParen)
        throw ParseError(cur_.offset, "expected ')'", {"&", "|", ")"});
      advance();
      return inner;
    }
    if (cur_.kind == Tok::Ident || cur_.kind == Tok::QuotedString) return parse_comparison();
    throw ParseError(cur_.offset, "expected a comparison", kUnaryStart);
  }

  ExprPtr parse_comparison() {
    std::string feature = cur_.text;
    advance();
    if (cur_.kind != Tok::Op) throw ParseError(cur_.offset, "expected a comparison operator", kOperators);
    const CompareOp op = cur_.op;
    advance();
    if (cur_.kind == Tok::Number) {
      const double v = cur_.number;
      advance();
      return make_comparison(std::move(feature), op, v);
    }
    if (cur_.kind == Tok::QuotedString) {
      if (op != CompareOp::EQ && op != CompareOp::NE)
        throw ParseError(cur_.offset, "string literals only support '==' and '!='", {"number"});
      std::string s = cur_.text;
      advance();
      return make_comparison(std::move(feature), op, std::move(s));
    }
    throw ParseError(cur_.offset, "expected a literal", kLiterals);
  }

  Lexer lexer_;
  Token cur_{Tok::End, 0, {}};
};

bool is_bare_identifier(std::string_view s) {
  if (s.empty() || !is_ident_start(s.front())) return false;
  for (char c : s)
    if (!is_ident_char(c)) return false;
  return true;
}

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void print_into(const Expr& e, std::string& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Comparison>) {
          out += is_bare_identifier(n.feature) ? n.feature : quote(n.feature);
          out += ' ';
          out += to_symbol(n.op);
          out += ' ';
          if (const auto* d = std::get_if<double>(&n.literal))
            out += format_number(*d);
          else
            out += quote(std::get<std::string>(n.literal));
        } else if constexpr (std::is_same_v<T, Not>) {
          out += "!(";
          print_into(*n.inner, out);
          out += ')';
        } else {
          out += '(';
          print_into(*n.left, out);
          out += std::is_same_v<T, And> ? " & " : " | ";
          print_into(*n.right, out);
          out += ')';
        }
      },
      e.node);
}

bool compare_numbers(double a, CompareOp op, double b) {
  switch (op) {
    case CompareOp::GT: return a > b;
    case CompareOp::GE: return a >= b;
    case CompareOp::LT: return a < b;
    case CompareOp::LE: return a <= b;
    case CompareOp::EQ: return a == b;
    case CompareOp::NE: return a != b;
  }
  return false;
}

bool eval_node(const Expr& e, const RowLookup& row) {
  if (const auto* c = std::get_if<Comparison>(&e.node)) {
    const std::optional<Value> v = row(c->feature);
    if (!v) throw NameResolutionError({c->feature});
    const bool lit_num = std::holds_alternative<double>(c->literal);
    const bool val_num = std::holds_alternative<double>(*v);
    if (lit_num && val_num) return compare_numbers(std::get<double>(*v), c->op, std::get<double>(c->literal));
    if (!lit_num && !val_num) {
      const bool eq = std::get<std::string>(*v) == std::get<std::string>(c->literal);
      if (c->op == CompareOp::EQ) return eq;
      if (c->op == CompareOp::NE) return !eq;
      throw Error(ErrorCode::Type,
                  "operator '" + std::string(to_symbol(c->op)) + "' is not defined for strings ('" + c->feature + "')");
    }
    if (val_num)
      throw Error(ErrorCode::Type, "feature '" + c->feature + "' is numeric but compared with a string");
    throw Error(ErrorCode::Type, "feature '" + c->feature + "' is a string but compared with a number");
  }
  if (const auto* n = std::get_if<Not>(&e.node)) return !eval_node(*n->inner, row);
  // Both sides are always evaluated so type errors do not depend on the data.
  if (const auto* a = std::get_if<And>(&e.node)) {
    const bool l = eval_node(*a->left, row);
    const bool r = eval_node(*a->right, row);
    return l && r;
  }
  const auto& o = std::get<Or>(e.node);
  const bool l = eval_node(*o.left, row);
  const bool r = eval_node(*o.right, row);
  return l || r;
}

}  // namespace

FilterExpr parse(std::string_view input) { return FilterExpr(Parser(input).parse_all()); }

std::string print(const FilterExpr& expr) {
  std::string out;
  print_into(expr.root(), out);
  return out;
}

bool eval(const FilterExpr& expr, const RowLookup& row) { return eval_node(expr.root(), row); }

}  // namespace clusterscope::filter
