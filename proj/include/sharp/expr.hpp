#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sharp {

// Position-annotated failure while parsing an expression string.
struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset(offset) {}
  std::size_t offset;
};

// Domain violation during evaluation (division by zero, log of a
// non-positive value, non-integer power of a non-positive base, NaN).
struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class NodeKind {
  Const,  // value
  Coord,  // coord (1-based in the surface syntax, 0-based here)
  Add, Sub, Mul, Div, Neg,
  Pow,    // child a ^ constant exponent (value)
  Exp, Log,
  Step,   // 1 if arg >= 0 else 0
  Min, Max,
};

struct Node {
  NodeKind kind;
  double value = 0.0;  // Const payload / Pow exponent
  int coord = -1;      // Coord payload (0-based)
  int a = -1, b = -1;  // child indices; always < own index
};

// Immutable arithmetic expression over coordinates x1..xdim.
// Nodes are stored in evaluation order (children before parents, root last),
// so evaluation is a single forward pass over a scratch vector and is safe to
// run concurrently from any number of threads.
class Expr {
 public:
  double eval(std::span<const double> point) const;
  double eval(std::span<const double> point, std::vector<double>& scratch) const;

  // Smallest dim that can evaluate this expression (= largest coordinate used).
  int min_dim() const { return min_dim_; }
  bool has_coord() const { return min_dim_ > 0; }

  // Infix form that parses back to an equivalent expression.
  std::string print() const;

  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  friend Expr parse_expr(const std::string&, int, const std::map<std::string, double>&);
  std::vector<Node> nodes_;
  int min_dim_ = 0;
};

// Parses the documented grammar. Coordinates are x1..x<dim>; `params` names
// resolve to constants (used by the CLI sweep machinery). Throws ParseError.
Expr parse_expr(const std::string& text, int dim,
                const std::map<std::string, double>& params = {});

double eval_expr(const Expr& e, std::span<const double> point);

}  // namespace sharp
