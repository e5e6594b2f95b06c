#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "sharp/expr.hpp"

namespace sharp {

constexpr double kMembershipTol = 1e-9;  // |x - S| tolerance for "atom in S"

enum class Side { Left, Right };

// Declared discontinuity point; the stage construction removes a shrinking
// one-sided open neighborhood ((at, at+delta) for Right, (at-delta, at) for
// Left) so the point itself stays in every stage.
struct Exclusion {
  double at = 0.0;
  Side side = Side::Right;
};

struct TruncationSchedule {
  double r0 = 1.0;     // stage-k clip radius is r0 * rho^k
  double rho = 2.0;
  int max_stages = 1;  // K; valid stage indices are 0..K-1
  std::vector<Exclusion> exclusions;
};

struct Box {
  std::vector<double> lower, upper;           // +-infinity allowed
  std::vector<char> lower_open, upper_open;   // per-coordinate openness
  int dim() const { return static_cast<int>(lower.size()); }
};

struct Interval {
  double lo = 0.0, hi = 0.0;
  bool lo_open = false, hi_open = false;
};

struct Interval1DUnion {
  std::vector<Interval> intervals;  // pairwise disjoint, sorted
};

struct FinitePoints {
  std::vector<std::vector<double>> points;
};

struct SupportSet {
  std::variant<Box, Interval1DUnion, FinitePoints> geometry;
  std::optional<TruncationSchedule> schedule;

  int dim() const;
  bool bounded() const;
  bool contains(std::span<const double> point, double tol = kMembershipTol) const;
  // Enclosing [lo, hi] per coordinate (infinite for unbounded supports).
  void bounding_box(std::vector<double>& lo, std::vector<double>& hi) const;
  double diameter() const;  // sup-norm diameter of the bounding box
};

enum class Direction { Lower, Upper };

struct Constraint {
  Expr f;
  double phi = 0.0;
};

struct ProblemSpec {
  int dim = 1;
  SupportSet support;
  std::vector<Constraint> constraints;  // m >= 1
  Expr objective;
  Direction direction = Direction::Upper;

  int m() const { return static_cast<int>(constraints.size()); }
  std::vector<double> phi() const;
};

struct DiscreteMeasure {
  std::vector<std::vector<double>> atoms;
  std::vector<double> weights;
  std::size_t size() const { return atoms.size(); }
};

struct Diagnostic {
  std::string code;     // machine-readable, e.g. "InvalidBox"
  std::string detail;
};

std::vector<Diagnostic> validate_problem(const ProblemSpec& p);

// Checks the DiscreteMeasure invariants (weights >= 0 and summing to 1 within
// 1e-12, atoms distinct and inside the support); returns diagnostics.
std::vector<Diagnostic> validate_measure(const DiscreteMeasure& mu, const SupportSet& s);

double measure_expectation(const DiscreteMeasure& mu, const Expr& e);

// Stage k of the progressive cover: S clipped to the sup-norm ball of radius
// r0*rho^k, open finite endpoints moved inward, exclusion neighborhoods of
// radius r0/rho^k removed. Bounded schedule-free supports pass through
// unchanged. Throws std::out_of_range for k >= max_stages.
SupportSet truncation_stage(const SupportSet& s, int k);

}  // namespace sharp
