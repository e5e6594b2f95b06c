#include "sharp/problem.hpp"

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "sharp/expr.hpp"

using namespace sharp;

namespace {
bool has_code(const std::vector<Diagnostic>& ds, const std::string& code) {
  return std::any_of(ds.begin(), ds.end(),
                     [&](const Diagnostic& d) { return d.code == code; });
}

bool in_support(const SupportSet& s, std::vector<double> pt) {
  return s.contains(pt, kMembershipTol);
}

ProblemSpec mean_var_problem(double lam, double var, const std::string& obj,
                             double lo, double hi) {
  ProblemSpec p;
  p.dim = 1;
  Box box;
  box.lower = {lo};
  box.upper = {hi};
  box.lower_open = {0};
  box.upper_open = {0};
  p.support.geometry = box;
  p.constraints.push_back({parse_expr("x1", 1), lam});
  p.constraints.push_back({parse_expr("x1^2", 1), var + lam * lam});
  p.objective = parse_expr(obj, 1);
  p.direction = Direction::Lower;
  return p;
}
}  // namespace

TEST_CASE("validate_problem accepts a well-posed bounded spec") {
  ProblemSpec p = mean_var_problem(1.0, 0.25, "x1^4", -4, 4);
  CHECK(validate_problem(p).empty());
}

TEST_CASE("validate_problem reports structural defects") {
  ProblemSpec p = mean_var_problem(1.0, 0.25, "x1^4", -4, 4);

  SUBCASE("objective exceeding dim") {
    p.objective = parse_expr("x2", 2);
    CHECK(has_code(validate_problem(p), "DimensionMismatch"));
  }
  SUBCASE("constraint exceeding dim") {
    p.constraints[0].f = parse_expr("x1 + x2", 2);
    CHECK(has_code(validate_problem(p), "DimensionMismatch"));
  }
  SUBCASE("non-finite target moment") {
    p.constraints[0].phi = std::nan("");
    CHECK(has_code(validate_problem(p), "NonFinitePhi"));
  }
  SUBCASE("no constraints") {
    p.constraints.clear();
    CHECK(has_code(validate_problem(p), "EmptyConstraints"));
  }
  SUBCASE("inverted box") {
    std::get<Box>(p.support.geometry).upper = {-5};
    CHECK(has_code(validate_problem(p), "InvalidBox"));
  }
  SUBCASE("unbounded support without a truncation schedule") {
    std::get<Box>(p.support.geometry).upper = {HUGE_VAL};
    CHECK(has_code(validate_problem(p), "UnboundedWithoutSchedule"));
  }
  SUBCASE("open endpoint without a truncation schedule") {
    std::get<Box>(p.support.geometry).lower_open = {1};
    CHECK(has_code(validate_problem(p), "OpenEndpointWithoutSchedule"));
  }
  SUBCASE("bad schedule parameters") {
    std::get<Box>(p.support.geometry).upper = {HUGE_VAL};
    p.support.schedule = TruncationSchedule{0.0, 2.0, 5, {}};
    CHECK(has_code(validate_problem(p), "InvalidSchedule"));
    p.support.schedule = TruncationSchedule{1.0, 1.0, 5, {}};
    CHECK(has_code(validate_problem(p), "InvalidSchedule"));
    p.support.schedule = TruncationSchedule{1.0, 2.0, 0, {}};
    CHECK(has_code(validate_problem(p), "InvalidSchedule"));
  }
  SUBCASE("exclusions only make sense in one dimension") {
    ProblemSpec q = p;
    q.dim = 2;
    Box box2;
    box2.lower = {-1, -1};
    box2.upper = {1, 1};
    box2.lower_open = {0, 0};
    box2.upper_open = {0, 0};
    q.support.geometry = box2;
    q.support.schedule = TruncationSchedule{1.0, 2.0, 3, {{0.0, Side::Left}}};
    q.constraints[0].f = parse_expr("x1 + x2", 2);
    q.constraints[1].f = parse_expr("x1^2", 2);
    q.objective = parse_expr("x1*x2", 2);
    CHECK(has_code(validate_problem(q), "ExclusionRequiresDim1"));
  }
}

TEST_CASE("finite point sets validate for duplicates and emptiness") {
  ProblemSpec p;
  p.dim = 1;
  FinitePoints pts;
  pts.points = {{0.0}, {1.0}, {0.0}};
  p.support.geometry = pts;
  p.constraints.push_back({parse_expr("x1", 1), 0.5});
  p.objective = parse_expr("x1^2", 1);
  CHECK(has_code(validate_problem(p), "FinitePointsDuplicate"));
  std::get<FinitePoints>(p.support.geometry).points.clear();
  CHECK(has_code(validate_problem(p), "EmptySupport"));
}

TEST_CASE("truncation stages grow, nest, and stay inside the original box") {
  SupportSet s;
  Box box;
  box.lower = {-HUGE_VAL};
  box.upper = {HUGE_VAL};
  box.lower_open = {0};
  box.upper_open = {0};
  s.geometry = box;
  s.schedule = TruncationSchedule{2.0, 2.0, 4, {}};

  double prev_lo = 0, prev_hi = 0;
  for (int k = 0; k < 4; ++k) {
    SupportSet stage = truncation_stage(s, k);
    const Box& b = std::get<Box>(stage.geometry);
    double radius = 2.0 * std::pow(2.0, k);
    CHECK(b.lower[0] == -radius);
    CHECK(b.upper[0] == radius);
    CHECK_FALSE(stage.schedule.has_value());
    if (k > 0) {
      CHECK(b.lower[0] <= prev_lo);
      CHECK(b.upper[0] >= prev_hi);
    }
    prev_lo = b.lower[0];
    prev_hi = b.upper[0];
  }
  CHECK_THROWS_AS(truncation_stage(s, 4), std::out_of_range);
}

TEST_CASE("half-line stages clip against the finite endpoint") {
  SupportSet s;
  Box box;
  box.lower = {0.5};
  box.upper = {HUGE_VAL};
  box.lower_open = {0};
  box.upper_open = {0};
  s.geometry = box;
  s.schedule = TruncationSchedule{1.0, 2.0, 3, {}};
  for (int k = 0; k < 3; ++k) {
    SupportSet stage = truncation_stage(s, k);
    const Box& b = std::get<Box>(stage.geometry);
    CHECK(b.lower[0] == 0.5);
    CHECK(b.upper[0] == std::pow(2.0, k));
  }
}

TEST_CASE("open endpoints shift inward and the shift shrinks geometrically") {
  SupportSet s;
  Box box;
  box.lower = {0.0};
  box.upper = {1.0};
  box.lower_open = {1};  // support is (0, 1]
  box.upper_open = {0};
  s.geometry = box;
  s.schedule = TruncationSchedule{1.0, 2.0, 5, {}};

  double prev = 1.0;
  for (int k = 0; k < 5; ++k) {
    SupportSet stage = truncation_stage(s, k);
    const Box& b = std::get<Box>(stage.geometry);
    CHECK(b.upper[0] == 1.0);
    CHECK(b.lower[0] > 0.0);     // never touches the excluded endpoint
    CHECK(b.lower[0] < prev);    // strictly expands toward it
    CHECK_FALSE(b.lower_open[0]);
    prev = b.lower[0];
  }
}

TEST_CASE("exclusions carve a vanishing open gap around the excluded point") {
  SupportSet s;
  Box box;
  box.lower = {0.0};
  box.upper = {4.0};
  box.lower_open = {0};
  box.upper_open = {0};
  s.geometry = box;
  s.schedule = TruncationSchedule{1.0, 2.0, 3, {{1.0, Side::Right}}};

  // Stage 0 clips to [0,1] and the gap (1, 2) swallows everything right of 1.
  {
    SupportSet st0 = truncation_stage(s, 0);
    const auto& uni = std::get<Interval1DUnion>(st0.geometry);
    REQUIRE(uni.intervals.size() == 1);
    CHECK(uni.intervals[0].lo == 0.0);
    CHECK(uni.intervals[0].hi == 1.0);  // the excluded point itself stays
  }
  double prev_gap = HUGE_VAL;
  for (int k = 1; k < 3; ++k) {
    SupportSet stage = truncation_stage(s, k);
    const auto& uni = std::get<Interval1DUnion>(stage.geometry);
    REQUIRE(uni.intervals.size() == 2);
    CHECK(uni.intervals[0].lo == 0.0);
    CHECK(uni.intervals[0].hi == 1.0);
    double gap = uni.intervals[1].lo - uni.intervals[0].hi;
    CHECK(gap > 0.0);
    CHECK(gap < prev_gap);
    CHECK(uni.intervals[1].hi == std::min(4.0, std::pow(2.0, k)));
    prev_gap = gap;
  }
  // Left-sided exclusions keep the point as a hard left endpoint.
  s.schedule = TruncationSchedule{1.0, 2.0, 3, {{1.0, Side::Left}}};
  SupportSet st2 = truncation_stage(s, 2);
  const auto& uni = std::get<Interval1DUnion>(st2.geometry);
  REQUIRE(uni.intervals.size() == 2);
  CHECK(uni.intervals[1].lo == 1.0);
  CHECK(uni.intervals[0].hi == 0.75);
}

TEST_CASE("membership respects boxes, unions, and finite sets") {
  SupportSet s;
  Box box;
  box.lower = {-1, 0};
  box.upper = {1, 2};
  box.lower_open = {0, 0};
  box.upper_open = {0, 0};
  s.geometry = box;
  CHECK(in_support(s, {0, 1}));
  CHECK(in_support(s, {1.0, 2.0}));
  CHECK(in_support(s, {1.0 + 1e-10, 2.0}));
  CHECK_FALSE(in_support(s, {1.1, 1.0}));

  SupportSet fp;
  FinitePoints pts;
  pts.points = {{-1, -1}, {1, 1}};
  fp.geometry = pts;
  CHECK(in_support(fp, {-1, -1}));
  CHECK(in_support(fp, {-1 + 1e-10, -1}));
  CHECK_FALSE(in_support(fp, {0, 0}));
}

TEST_CASE("measure expectation is linear and exact on rationals") {
  DiscreteMeasure mu;
  mu.atoms = {{0.0}, {2.0}};
  mu.weights = {0.25, 0.75};
  Expr f = parse_expr("x1", 1);
  Expr f2 = parse_expr("x1^2", 1);
  CHECK(measure_expectation(mu, f) == 1.5);
  CHECK(measure_expectation(mu, f2) == 3.0);
  Expr combo = parse_expr("2*x1 + 3*x1^2", 1);
  CHECK(measure_expectation(mu, combo) ==
        2 * measure_expectation(mu, f) + 3 * measure_expectation(mu, f2));
}

TEST_CASE("validate_measure flags shape and weight defects") {
  ProblemSpec p = mean_var_problem(1.0, 0.25, "x1^4", -4, 4);
  DiscreteMeasure mu;
  mu.atoms = {{0.5}, {1.5}};
  mu.weights = {0.5, 0.5};
  CHECK(validate_measure(mu, p.support).empty());

  SUBCASE("weights must sum to one") {
    mu.weights = {0.5, 0.6};
    CHECK(has_code(validate_measure(mu, p.support), "WeightsNotNormalized"));
  }
  SUBCASE("weights must be nonnegative") {
    mu.weights = {1.5, -0.5};
    CHECK(has_code(validate_measure(mu, p.support), "NegativeWeight"));
  }
  SUBCASE("atoms must lie in the support") {
    mu.atoms[1] = {9.0};
    CHECK(has_code(validate_measure(mu, p.support), "AtomOutsideSupport"));
  }
  SUBCASE("atom/weight count mismatch") {
    mu.weights.push_back(0.0);
    CHECK(has_code(validate_measure(mu, p.support), "MeasureShape"));
  }
}

TEST_CASE("a bounded support with no schedule passes through stage zero") {
  SupportSet s;
  Box box;
  box.lower = {-1};
  box.upper = {1};
  box.lower_open = {0};
  box.upper_open = {0};
  s.geometry = box;
  SupportSet stage = truncation_stage(s, 0);
  const Box& b = std::get<Box>(stage.geometry);
  CHECK(b.lower[0] == -1);
  CHECK(b.upper[0] == 1);
}
