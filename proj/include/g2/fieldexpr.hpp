#pragma once

#include <array>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// A small expression language for scalar fields in config files: literals,
// coordinates x1..x7, + - * / ^, unary minus, sin/cos/exp/sqrt, pi.
// Precedence: ^ (right assoc) > unary - > * / > + -.
namespace g2::fieldexpr {

enum class Func { Sin, Cos, Exp, Sqrt };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { Number, Pi, Coord, Unary, Binary, Call };
  Kind kind = Kind::Number;
  double number = 0.0;  // Kind::Number
  int coord = 0;        // Kind::Coord, 0-based axis
  char op = '+';        // Kind::Binary
  Func func = Func::Sin;
  ExprPtr a, b;  // operands (Unary/Call use a only)
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string message, int line, int column, std::vector<std::string> expected);
  int line;
  int column;
  std::vector<std::string> expected;
};

class EvalError : public std::runtime_error {
 public:
  enum class Kind { DivisionByZero, SqrtOfNegative, NonFinite };
  EvalError(Kind kind, const std::string& what) : std::runtime_error(what), kind(kind) {}
  Kind kind;
};

ExprPtr parse(std::string_view text);  // throws ParseError

double evaluate(const Expr& e, const std::array<double, 7>& coords);  // throws EvalError
inline double evaluate(const ExprPtr& e, const std::array<double, 7>& coords) {
  return evaluate(*e, coords);
}

std::string print(const Expr& e);  // reparses to the same tree
inline std::string print(const ExprPtr& e) { return print(*e); }

}  // namespace g2::fieldexpr
