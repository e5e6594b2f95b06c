#include "sharp/expr.hpp"

#include <cmath>
#include <random>

#include "doctest.h"

using namespace sharp;

namespace {
constexpr double kE = 2.718281828459045235360287;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  double u = (rng() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

double ev(const std::string& text, std::vector<double> pt, int dim = 0) {
  if (dim == 0) dim = static_cast<int>(pt.size());
  return parse_expr(text, dim).eval(pt);
}
}  // namespace

TEST_CASE("monomials, named constant, and arithmetic") {
  CHECK(ev("x1^2", {3}) == 9.0);
  CHECK(ev("x1*x2 - 1", {2, 5}) == 9.0);
  CHECK(ev("e", {0}) == doctest::Approx(kE).epsilon(1e-15));
  CHECK(ev("exp(x1) + exp(x2)", {1, 1}) == doctest::Approx(2 * kE).epsilon(1e-14));
  CHECK(ev("pow(x1, 3)", {2}) == 8.0);
  CHECK(ev("min(x1, 2) + max(x1, 5)", {3}) == 7.0);
}

TEST_CASE("precedence: ^ before unary minus before mul/div before add/sub") {
  CHECK(ev("2 + 3*4^2", {0}) == 50.0);
  CHECK(ev("-x1^2", {2}) == -4.0);
  CHECK(ev("-2^2", {0}) == -4.0);
  CHECK(ev("2 - 3 - 4", {0}) == -5.0);
  CHECK(ev("8/4/2", {0}) == 1.0);
  CHECK(ev("x1^-2", {2}) == 0.25);
  CHECK(ev("2*e", {0}) == doctest::Approx(2 * kE).epsilon(1e-15));
  CHECK(ev("x1^(1/2)", {4}) == 2.0);
  // Right associativity of ^ (exponents fold to constants first).
  CHECK(ev("2^3^2", {0}) == 512.0);
}

TEST_CASE("step follows the closed-at-zero convention and is right-continuous") {
  CHECK(ev("step(x1)", {0}) == 1.0);
  CHECK(ev("step(x1 - 0.5)", {0.5}) == 1.0);
  CHECK(ev("step(x1 - 0.5)", {0.49999}) == 0.0);
  for (double eps : {1e-1, 1e-6, 1e-12, 1e-100, 1e-300}) {
    CHECK(ev("step(x1)", {-eps}) == 0.0);
    CHECK(ev("step(x1)", {eps}) == 1.0);
  }
}

TEST_CASE("scientific literals do not swallow the e constant") {
  CHECK(ev("1e3", {0}) == 1000.0);
  CHECK(ev("1.5e-2", {0}) == 0.015);
  CHECK(ev("1.5E+2", {0}) == 150.0);
  CHECK_THROWS_AS(parse_expr("2e", 1), ParseError);   // "2e" is 2 then identifier e
  CHECK(ev("2*e", {0}) == doctest::Approx(2 * kE));
}

TEST_CASE("parse errors carry a byte offset") {
  try {
    parse_expr("2 + @", 1);
    FAIL("expected ParseError");
  } catch (const ParseError& err) {
    CHECK(err.offset == 4);
  }
  CHECK_THROWS_AS(parse_expr("x1 +", 1), ParseError);
  CHECK_THROWS_AS(parse_expr("(x1", 1), ParseError);
  CHECK_THROWS_AS(parse_expr("x1)", 1), ParseError);
  CHECK_THROWS_AS(parse_expr("foo(x1)", 1), ParseError);
  CHECK_THROWS_AS(parse_expr("y + 1", 1), ParseError);
  CHECK_THROWS_AS(parse_expr("x3", 2), ParseError);   // coordinate out of range
  CHECK_THROWS_AS(parse_expr("x1^x1", 1), ParseError);  // exponent must fold
  CHECK_THROWS_AS(parse_expr("min(x1)", 1), ParseError);
  CHECK_THROWS_AS(parse_expr("", 1), ParseError);
}

TEST_CASE("named parameters resolve to constants at parse time") {
  Expr g = parse_expr("exp(s*x1)", 1, {{"s", 0.5}});
  CHECK(g.eval(std::vector<double>{2.0}) == doctest::Approx(std::exp(1.0)).epsilon(1e-15));
  CHECK(parse_expr("x1^s", 1, {{"s", 3.0}}).eval(std::vector<double>{2.0}) == 8.0);
  CHECK_THROWS_AS(parse_expr("exp(s*x1)", 1), ParseError);  // unbound name
}

TEST_CASE("domain violations throw instead of returning NaN") {
  CHECK_THROWS_AS(ev("1/x1", {0}), EvalError);
  CHECK_THROWS_AS(ev("log(x1)", {0}), EvalError);
  CHECK_THROWS_AS(ev("log(x1)", {-1}), EvalError);
  CHECK(ev("log(x1)", {kE}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(ev("x1^0.5", {-1}), EvalError);
  CHECK_THROWS_AS(ev("x1^-1", {0}), EvalError);
  CHECK_THROWS_AS(ev("0^-2", {0}), EvalError);
  // inf - inf must be reported, not silently propagated.
  CHECK_THROWS_AS(ev("exp(x1) - exp(x1 - 1) * e", {1000}), EvalError);
  // Overflow to +inf on its own is a legitimate limit value.
  CHECK(std::isinf(ev("exp(x1)", {1000})));
}

TEST_CASE("coordinate dimension is enforced at parse time") {
  CHECK_NOTHROW(parse_expr("x2", 2));
  CHECK_THROWS_AS(parse_expr("x2", 1), ParseError);
  CHECK(parse_expr("x2 + x1", 5).min_dim() == 2);
  CHECK(parse_expr("3 + e", 5).min_dim() == 0);
}

TEST_CASE("parse-print round trip evaluates identically on random points") {
  std::mt19937_64 rng(2026);
  const char* exprs[] = {
      "x1^2 - 3*x1 + 1",
      "exp(x1) + exp(x2)",
      "step(x1 - 0.5)*x2 + min(x1, x2)",
      "max(x1*x2, x1/(x2 + 10))",
      "(x1 + x2)^3 / (1 + x1^2)",
      "log(x1 + 11) - x2^-2",
  };
  for (const char* text : exprs) {
    Expr e = parse_expr(text, 2);
    Expr round = parse_expr(e.print(), 2);
    for (int i = 0; i < 100; ++i) {
      std::vector<double> pt{uniform(rng, 0.1, 5), uniform(rng, 0.1, 5)};
      CHECK(e.eval(pt) == round.eval(pt));
    }
  }
}

TEST_CASE("evaluation is pure and bit-identical across repeats") {
  Expr e = parse_expr("exp(x1)*x2 - log(x2)/(x1 + 2) + x1^3", 2);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> pt{uniform(rng, -1, 1), uniform(rng, 0.5, 4)};
    double a = e.eval(pt);
    double b = e.eval(pt);
    std::vector<double> scratch;
    double c = e.eval(pt, scratch);
    CHECK(a == b);
    CHECK(a == c);
  }
}
