#include "g2/fieldexpr.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>

namespace g2::fieldexpr {

namespace {

std::string describe(const std::vector<std::string>& expected) {
  std::string s;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i) s += i + 1 == expected.size() ? " or " : ", ";
    s += expected[i];
  }
  return s;
}

}  // namespace

ParseError::ParseError(std::string message, int line_, int column_, std::vector<std::string> expected_)
    : std::runtime_error(message + " at " + std::to_string(line_) + ":" + std::to_string(column_) +
                         (expected_.empty() ? "" : " (expected " + describe(expected_) + ")")),
      line(line_),
      column(column_),
      expected(std::move(expected_)) {}

namespace {

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };

struct Token {
  Tok kind = Tok::End;
  double number = 0.0;
  std::string ident;
  int line = 1;
  int column = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) { advance(); }

  const Token& peek() const { return current_; }

  Token take() {
    Token t = current_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      if (text_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
    current_ = Token{};
    current_.line = line_;
    current_.column = col_;
    if (pos_ >= text_.size()) {
      current_.kind = Tok::End;
      return;
    }
    const char c = text_[pos_];
    switch (c) {
      case '+': current_.kind = Tok::Plus; consume(); return;
      case '-': current_.kind = Tok::Minus; consume(); return;
      case '*': current_.kind = Tok::Star; consume(); return;
      case '/': current_.kind = Tok::Slash; consume(); return;
      case '^': current_.kind = Tok::Caret; consume(); return;
      case '(': current_.kind = Tok::LParen; consume(); return;
      case ')': current_.kind = Tok::RParen; consume(); return;
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const std::size_t start = pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) consume();
      if (pos_ < text_.size() && text_[pos_] == '.') {
        consume();
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) consume();
      }
      if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
        std::size_t mark = pos_;
        consume();
        if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) consume();
        if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
          while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) consume();
        } else {
          pos_ = mark;  // bare 'e' belongs to the next token
        }
      }
      const std::string num(text_.substr(start, pos_ - start));
      if (num == ".") throw ParseError("malformed number", current_.line, current_.column, {"digit"});
      current_.kind = Tok::Number;
      current_.number = std::stod(num);
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        consume();
      current_.kind = Tok::Ident;
      current_.ident = std::string(text_.substr(start, pos_ - start));
      return;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", line_, col_, {"expression"});
  }

  void consume() {
    ++pos_;
    ++col_;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  Token current_;
};

ExprPtr make(Expr e) { return std::make_shared<Expr>(std::move(e)); }

class Parser {
 public:
  explicit Parser(std::string_view text) : lex_(text) {}

  ExprPtr run() {
    ExprPtr e = expr();
    const Token& t = lex_.peek();
    if (t.kind != Tok::End)
      throw ParseError("trailing input", t.line, t.column, {"operator", "end of input"});
    return e;
  }

 private:
  ExprPtr expr() {
    ExprPtr lhs = term();
    while (lex_.peek().kind == Tok::Plus || lex_.peek().kind == Tok::Minus) {
      const char op = lex_.take().kind == Tok::Plus ? '+' : '-';
      Expr e;
      e.kind = Expr::Kind::Binary;
      e.op = op;
      e.a = lhs;
      e.b = term();
      lhs = make(std::move(e));
    }
    return lhs;
  }

  ExprPtr term() {
    ExprPtr lhs = unary();
    while (lex_.peek().kind == Tok::Star || lex_.peek().kind == Tok::Slash) {
      const char op = lex_.take().kind == Tok::Star ? '*' : '/';
      Expr e;
      e.kind = Expr::Kind::Binary;
      e.op = op;
      e.a = lhs;
      e.b = unary();
      lhs = make(std::move(e));
    }
    return lhs;
  }

  ExprPtr unary() {
    if (lex_.peek().kind == Tok::Minus) {
      lex_.take();
      Expr e;
      e.kind = Expr::Kind::Unary;
      e.a = unary();
      return make(std::move(e));
    }
    return power();
  }

  ExprPtr power() {
    ExprPtr base = atom();
    if (lex_.peek().kind == Tok::Caret) {
      lex_.take();
      Expr e;
      e.kind = Expr::Kind::Binary;
      e.op = '^';
      e.a = base;
      e.b = unary();  // right associative; exponent may carry unary minus
      return make(std::move(e));
    }
    return base;
  }

  ExprPtr atom() {
    const Token t = lex_.take();
    switch (t.kind) {
      case Tok::Number: {
        Expr e;
        e.kind = Expr::Kind::Number;
        e.number = t.number;
        return make(std::move(e));
      }
      case Tok::LParen: {
        ExprPtr inner = expr();
        expect_rparen();
        return inner;
      }
      case Tok::Ident: {
        if (t.ident == "pi") {
          Expr e;
          e.kind = Expr::Kind::Pi;
          return make(std::move(e));
        }
        if (t.ident.size() == 2 && t.ident[0] == 'x' && t.ident[1] >= '1' && t.ident[1] <= '7') {
          Expr e;
          e.kind = Expr::Kind::Coord;
          e.coord = t.ident[1] - '1';
          return make(std::move(e));
        }
        Func f;
        if (t.ident == "sin")
          f = Func::Sin;
        else if (t.ident == "cos")
          f = Func::Cos;
        else if (t.ident == "exp")
          f = Func::Exp;
        else if (t.ident == "sqrt")
          f = Func::Sqrt;
        else
          throw ParseError("unknown identifier '" + t.ident + "'", t.line, t.column,
                           {"x1..x7", "pi", "sin", "cos", "exp", "sqrt"});
        const Token open = lex_.take();
        if (open.kind != Tok::LParen)
          throw ParseError("function call needs parentheses", open.line, open.column, {"("});
        Expr e;
        e.kind = Expr::Kind::Call;
        e.func = f;
        e.a = expr();
        expect_rparen();
        return make(std::move(e));
      }
      default:
        throw ParseError("unexpected token", t.line, t.column, {"number", "identifier", "(", "-"});
    }
  }

  void expect_rparen() {
    const Token t = lex_.take();
    if (t.kind != Tok::RParen) throw ParseError("unbalanced parentheses", t.line, t.column, {")"});
  }

  Lexer lex_;
};

}  // namespace

ExprPtr parse(std::string_view text) { return Parser(text).run(); }

double evaluate(const Expr& e, const std::array<double, 7>& coords) {
  switch (e.kind) {
    case Expr::Kind::Number: return e.number;
    case Expr::Kind::Pi: return std::numbers::pi;
    case Expr::Kind::Coord: return coords[static_cast<std::size_t>(e.coord)];
    case Expr::Kind::Unary: return -evaluate(*e.a, coords);
    case Expr::Kind::Call: {
      const double x = evaluate(*e.a, coords);
      switch (e.func) {
        case Func::Sin: return std::sin(x);
        case Func::Cos: return std::cos(x);
        case Func::Exp: return std::exp(x);
        case Func::Sqrt:
          if (x < 0.0) throw EvalError(EvalError::Kind::SqrtOfNegative, "sqrt of negative value");
          return std::sqrt(x);
      }
      break;
    }
    case Expr::Kind::Binary: {
      const double a = evaluate(*e.a, coords);
      const double b = evaluate(*e.b, coords);
      double r = 0.0;
      switch (e.op) {
        case '+': r = a + b; break;
        case '-': r = a - b; break;
        case '*': r = a * b; break;
        case '/':
          if (b == 0.0) throw EvalError(EvalError::Kind::DivisionByZero, "division by zero");
          r = a / b;
          break;
        case '^': r = std::pow(a, b); break;
        default: break;
      }
      if (!std::isfinite(r)) throw EvalError(EvalError::Kind::NonFinite, "non-finite result");
      return r;
    }
  }
  throw EvalError(EvalError::Kind::NonFinite, "malformed expression node");
}

std::string print(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Number: {
      std::ostringstream os;
      os.precision(17);
      os << e.number;
      return os.str();
    }
    case Expr::Kind::Pi: return "pi";
    case Expr::Kind::Coord: return "x" + std::to_string(e.coord + 1);
    case Expr::Kind::Unary: return "(-" + print(*e.a) + ")";
    case Expr::Kind::Call: {
      const char* name = e.func == Func::Sin   ? "sin"
                         : e.func == Func::Cos ? "cos"
                         : e.func == Func::Exp ? "exp"
                                               : "sqrt";
      return std::string(name) + "(" + print(*e.a) + ")";
    }
    case Expr::Kind::Binary:
      return "(" + print(*e.a) + std::string(1, e.op) + print(*e.b) + ")";
  }
  return "";
}

}  // namespace g2::fieldexpr
