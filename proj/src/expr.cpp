#include "sharp/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace sharp {

namespace {

enum class TokKind { Num, Ident, Op, LParen, RParen, Comma, End };

struct Token {
  TokKind kind;
  double num = 0.0;
  std::string ident;
  char op = 0;
  std::size_t pos = 0;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) { advance(); }

  const Token& peek() const { return tok_; }

  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (i_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[i_]))) ++i_;
    tok_.pos = i_;
    if (i_ >= text_.size()) {
      tok_.kind = TokKind::End;
      return;
    }
    char c = text_[i_];
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i_ + 1 < text_.size() &&
         std::isdigit(static_cast<unsigned char>(text_[i_ + 1])))) {
      lex_number();
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i_;
      while (j < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[j])) || text_[j] == '_'))
        ++j;
      tok_.kind = TokKind::Ident;
      tok_.ident = text_.substr(i_, j - i_);
      i_ = j;
      return;
    }
    switch (c) {
      case '(': tok_.kind = TokKind::LParen; ++i_; return;
      case ')': tok_.kind = TokKind::RParen; ++i_; return;
      case ',': tok_.kind = TokKind::Comma; ++i_; return;
      case '+': case '-': case '*': case '/': case '^':
        tok_.kind = TokKind::Op;
        tok_.op = c;
        ++i_;
        return;
      default:
        throw ParseError(std::string("unexpected character '") + c + "'", i_);
    }
  }

  // Decimal literal with optional fraction and exponent. The exponent marker
  // 'e' is consumed only when digits follow, so "2*e" lexes as 2, '*', ident e.
  void lex_number() {
    std::size_t j = i_;
    while (j < text_.size() && std::isdigit(static_cast<unsigned char>(text_[j]))) ++j;
    if (j < text_.size() && text_[j] == '.') {
      ++j;
      while (j < text_.size() && std::isdigit(static_cast<unsigned char>(text_[j]))) ++j;
    }
    if (j < text_.size() && (text_[j] == 'e' || text_[j] == 'E')) {
      std::size_t k = j + 1;
      if (k < text_.size() && (text_[k] == '+' || text_[k] == '-')) ++k;
      if (k < text_.size() && std::isdigit(static_cast<unsigned char>(text_[k]))) {
        ++k;
        while (k < text_.size() && std::isdigit(static_cast<unsigned char>(text_[k]))) ++k;
        j = k;
      }
    }
    tok_.kind = TokKind::Num;
    tok_.num = std::strtod(text_.substr(i_, j - i_).c_str(), nullptr);
    i_ = j;
  }

  const std::string& text_;
  std::size_t i_ = 0;
  Token tok_;
};

class Parser {
 public:
  Parser(const std::string& text, int dim, const std::map<std::string, double>& params)
      : lex_(text), dim_(dim), params_(params) {}

  std::vector<Node> run() {
    std::vector<Node> nodes;
    parse_expr_into(nodes);
    const Token& t = lex_.peek();
    if (t.kind != TokKind::End)
      throw ParseError("unexpected trailing input", t.pos);
    return nodes;
  }

 private:
  using Nodes = std::vector<Node>;

  int emit(Nodes& out, Node n) {
    out.push_back(n);
    return static_cast<int>(out.size()) - 1;
  }

  int parse_expr_into(Nodes& out) {
    int lhs = parse_term(out);
    while (lex_.peek().kind == TokKind::Op &&
           (lex_.peek().op == '+' || lex_.peek().op == '-')) {
      char op = lex_.take().op;
      int rhs = parse_term(out);
      lhs = emit(out, {op == '+' ? NodeKind::Add : NodeKind::Sub, 0, -1, lhs, rhs});
    }
    return lhs;
  }

  int parse_term(Nodes& out) {
    int lhs = parse_factor(out);
    while (lex_.peek().kind == TokKind::Op &&
           (lex_.peek().op == '*' || lex_.peek().op == '/')) {
      char op = lex_.take().op;
      int rhs = parse_factor(out);
      lhs = emit(out, {op == '*' ? NodeKind::Mul : NodeKind::Div, 0, -1, lhs, rhs});
    }
    return lhs;
  }

  int parse_factor(Nodes& out) {
    if (lex_.peek().kind == TokKind::Op && lex_.peek().op == '-') {
      lex_.take();
      int a = parse_factor(out);
      return emit(out, {NodeKind::Neg, 0, -1, a, -1});
    }
    return parse_power(out);
  }

  int parse_power(Nodes& out) {
    int base = parse_atom(out);
    if (lex_.peek().kind == TokKind::Op && lex_.peek().op == '^') {
      std::size_t pos = lex_.take().pos;
      double expo = parse_const_exponent(out, pos);
      return emit(out, {NodeKind::Pow, expo, -1, base, -1});
    }
    return base;
  }

  // The exponent subtree must fold to a constant (no coordinates); it is
  // evaluated once here and discarded.
  double parse_const_exponent(Nodes& out, std::size_t pos) {
    std::size_t mark = out.size();
    int root = parse_factor(out);
    for (std::size_t i = mark; i < out.size(); ++i)
      if (out[i].kind == NodeKind::Coord)
        throw ParseError("power exponent must be a constant expression", pos);
    std::vector<double> scratch(out.size());
    double v;
    try {
      for (std::size_t i = mark; i < out.size(); ++i)
        scratch[i] = eval_node(out[i], scratch, {});
      v = scratch[root];
    } catch (const EvalError& err) {
      throw ParseError(std::string("power exponent: ") + err.what(), pos);
    }
    out.resize(mark);
    return v;
  }

  int parse_atom(Nodes& out) {
    Token t = lex_.take();
    switch (t.kind) {
      case TokKind::Num:
        return emit(out, {NodeKind::Const, t.num, -1, -1, -1});
      case TokKind::LParen: {
        int e = parse_expr_into(out);
        expect_rparen();
        return e;
      }
      case TokKind::Ident:
        return parse_ident(out, t);
      default:
        throw ParseError("expected a number, identifier or '('", t.pos);
    }
  }

  int parse_ident(Nodes& out, const Token& t) {
    const std::string& id = t.ident;
    if (lex_.peek().kind == TokKind::LParen) return parse_call(out, t);
    if (id == "e")
      return emit(out, {NodeKind::Const, 2.718281828459045235360287, -1, -1, -1});
    if (id.size() >= 2 && id[0] == 'x' &&
        id.find_first_not_of("0123456789", 1) == std::string::npos) {
      long idx = std::strtol(id.c_str() + 1, nullptr, 10);
      if (idx < 1 || idx > dim_)
        throw ParseError("coordinate index out of range: " + id, t.pos);
      return emit(out, {NodeKind::Coord, 0, static_cast<int>(idx - 1), -1, -1});
    }
    if (auto it = params_.find(id); it != params_.end())
      return emit(out, {NodeKind::Const, it->second, -1, -1, -1});
    throw ParseError("unknown identifier: " + id, t.pos);
  }

  int parse_call(Nodes& out, const Token& name) {
    lex_.take();  // '('
    const std::string& id = name.ident;
    if (id == "exp" || id == "log" || id == "step") {
      int a = parse_expr_into(out);
      expect_rparen();
      NodeKind k = id == "exp" ? NodeKind::Exp
                 : id == "log" ? NodeKind::Log
                                : NodeKind::Step;
      return emit(out, {k, 0, -1, a, -1});
    }
    if (id == "min" || id == "max") {
      int a = parse_expr_into(out);
      expect_comma();
      int b = parse_expr_into(out);
      expect_rparen();
      return emit(out, {id == "min" ? NodeKind::Min : NodeKind::Max, 0, -1, a, b});
    }
    if (id == "pow") {
      int a = parse_expr_into(out);
      expect_comma();
      double expo = parse_const_exponent(out, name.pos);
      expect_rparen();
      return emit(out, {NodeKind::Pow, expo, -1, a, -1});
    }
    throw ParseError("unknown function: " + id, name.pos);
  }

  void expect_rparen() {
    Token t = lex_.take();
    if (t.kind != TokKind::RParen) throw ParseError("expected ')'", t.pos);
  }

  void expect_comma() {
    Token t = lex_.take();
    if (t.kind != TokKind::Comma) throw ParseError("expected ','", t.pos);
  }

 public:
  static double eval_node(const Node& n, std::span<const double> scratch,
                          std::span<const double> point) {
    double v;
    switch (n.kind) {
      case NodeKind::Const: v = n.value; break;
      case NodeKind::Coord:
        if (n.coord >= static_cast<int>(point.size()))
          throw EvalError("point has too few coordinates");
        v = point[n.coord];
        break;
      case NodeKind::Add: v = scratch[n.a] + scratch[n.b]; break;
      case NodeKind::Sub: v = scratch[n.a] - scratch[n.b]; break;
      case NodeKind::Mul: v = scratch[n.a] * scratch[n.b]; break;
      case NodeKind::Div:
        if (scratch[n.b] == 0.0) throw EvalError("division by zero");
        v = scratch[n.a] / scratch[n.b];
        break;
      case NodeKind::Neg: v = -scratch[n.a]; break;
      case NodeKind::Pow: {
        double base = scratch[n.a], expo = n.value;
        bool integral = expo == std::nearbyint(expo) && std::abs(expo) < 1e15;
        if (!integral && base <= 0.0)
          throw EvalError("non-integer power of a non-positive base");
        if (integral && base == 0.0 && expo < 0.0)
          throw EvalError("zero raised to a negative power");
        v = std::pow(base, expo);
        break;
      }
      case NodeKind::Exp: v = std::exp(scratch[n.a]); break;
      case NodeKind::Log:
        if (!(scratch[n.a] > 0.0)) throw EvalError("log of a non-positive value");
        v = std::log(scratch[n.a]);
        break;
      case NodeKind::Step:
        if (std::isnan(scratch[n.a])) throw EvalError("step of NaN");
        v = scratch[n.a] >= 0.0 ? 1.0 : 0.0;
        break;
      case NodeKind::Min: v = scratch[n.a] < scratch[n.b] ? scratch[n.a] : scratch[n.b]; break;
      case NodeKind::Max: v = scratch[n.a] > scratch[n.b] ? scratch[n.a] : scratch[n.b]; break;
      default: throw EvalError("corrupt expression node");
    }
    if (std::isnan(v)) throw EvalError("evaluation produced NaN");
    return v;
  }

 private:
  Lexer lex_;
  int dim_;
  const std::map<std::string, double>& params_;
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void print_node(const std::vector<Node>& nodes, int i, std::string& out) {
  const Node& n = nodes[i];
  switch (n.kind) {
    case NodeKind::Const: out += fmt_double(n.value); return;
    case NodeKind::Coord: out += "x" + std::to_string(n.coord + 1); return;
    case NodeKind::Neg:
      out += "(-";
      print_node(nodes, n.a, out);
      out += ")";
      return;
    case NodeKind::Pow:
      out += "(";
      print_node(nodes, n.a, out);
      out += ")^(" + fmt_double(n.value) + ")";
      return;
    case NodeKind::Exp: case NodeKind::Log: case NodeKind::Step:
      out += n.kind == NodeKind::Exp ? "exp(" : n.kind == NodeKind::Log ? "log(" : "step(";
      print_node(nodes, n.a, out);
      out += ")";
      return;
    case NodeKind::Min: case NodeKind::Max:
      out += n.kind == NodeKind::Min ? "min(" : "max(";
      print_node(nodes, n.a, out);
      out += ", ";
      print_node(nodes, n.b, out);
      out += ")";
      return;
    default: {
      const char* op = n.kind == NodeKind::Add ? " + "
                     : n.kind == NodeKind::Sub ? " - "
                     : n.kind == NodeKind::Mul ? "*"
                                               : "/";
      out += "(";
      print_node(nodes, n.a, out);
      out += op;
      print_node(nodes, n.b, out);
      out += ")";
      return;
    }
  }
}

}  // namespace

Expr parse_expr(const std::string& text, int dim,
                const std::map<std::string, double>& params) {
  Expr e;
  e.nodes_ = Parser(text, dim, params).run();
  for (const Node& n : e.nodes_)
    if (n.kind == NodeKind::Coord && n.coord + 1 > e.min_dim_) e.min_dim_ = n.coord + 1;
  return e;
}

double Expr::eval(std::span<const double> point, std::vector<double>& scratch) const {
  scratch.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    scratch[i] = Parser::eval_node(nodes_[i], scratch, point);
  return scratch.back();
}

double Expr::eval(std::span<const double> point) const {
  std::vector<double> scratch;
  return eval(point, scratch);
}

std::string Expr::print() const {
  std::string out;
  print_node(nodes_, static_cast<int>(nodes_.size()) - 1, out);
  return out;
}

double eval_expr(const Expr& e, std::span<const double> point) { return e.eval(point); }

}  // namespace sharp
