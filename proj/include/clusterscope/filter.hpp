#pragma once

// Filter mini-language.
//
//   or-expr    := and-expr ('|' and-expr)*
//   and-expr   := unary ('&' unary)*
//   unary      := '!' unary | '(' or-expr ')' | comparison
//   comparison := identifier op literal
//   op         := '>' | '>=' | '<' | '<=' | '==' | '!='
//
// Identifiers are bare words or double-quoted strings. String literals are
// only allowed with '==' and '!='.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace clusterscope::filter {

enum class CompareOp { GT, GE, LT, LE, EQ, NE };

std::string_view to_symbol(CompareOp op) noexcept;

using Value = std::variant<double, std::string>;

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Comparison {
  std::string feature;
  CompareOp op;
  Value literal;
};

struct And {
  ExprPtr left, right;
};

struct Or {
  ExprPtr left, right;
};

struct Not {
  ExprPtr inner;
};

struct Expr {
  std::variant<Comparison, And, Or, Not> node;
};

// Immutable AST handle. Copies share structure.
class FilterExpr {
 public:
  explicit FilterExpr(ExprPtr root);

  const Expr& root() const noexcept { return *root_; }
  const ExprPtr& ptr() const noexcept { return root_; }

  // Distinct identifiers in first-appearance order.
  std::vector<std::string> identifiers() const;

  friend bool operator==(const FilterExpr& a, const FilterExpr& b);

 private:
  ExprPtr root_;
};

ExprPtr make_comparison(std::string feature, CompareOp op, Value literal);
ExprPtr make_and(ExprPtr left, ExprPtr right);
ExprPtr make_or(ExprPtr left, ExprPtr right);
ExprPtr make_not(ExprPtr inner);

bool structurally_equal(const Expr& a, const Expr& b);

// Throws ParseError with the byte offset and the set of expected tokens.
FilterExpr parse(std::string_view input);

// Fully parenthesized rendering; parse(print(e)) == e.
std::string print(const FilterExpr& expr);

// Returns the value of a feature for the row being evaluated, or nullopt when
// the row has no such feature.
using RowLookup = std::function<std::optional<Value>(std::string_view)>;

// Throws Error(Type) on numeric/string mismatch and NameResolutionError on a
// missing feature.
bool eval(const FilterExpr& expr, const RowLookup& row);

}  // namespace clusterscope::filter
