#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sharp/problem.hpp"

namespace sharp {

enum class GridScale { Uniform, Log };

// One contiguous run of grid ticks along a coordinate axis. Interval-union
// supports produce several runs per axis; boxes produce exactly one.
struct AxisSegment {
  double lo = 0.0;
  double hi = 0.0;
  int res = 2;
  GridScale scale = GridScale::Uniform;

  // Local tick spacing near x (log grids space multiplicatively).
  double spacing_at(double x) const;
};

// Tabulated problem data over one bounded stage. Every retained point carries
// its constraint images f(x) − φ and objective value g(x), so a dual function
// evaluation is a dot-product scan instead of repeated expression evaluation.
// g values may be ±inf (overflow is a meaningful limit); points where any
// expression fails to evaluate, or where an f value is non-finite (such a
// point can never carry mass in a feasible measure), are dropped and counted.
struct StageGrid {
  int dim = 0;
  int m = 0;
  std::vector<double> phi;

  std::vector<double> points;  // point-major, dim entries per point
  std::vector<double> fshift;  // point-major, m entries per point: f(x) − φ
  std::vector<double> gvals;   // one per point
  std::size_t skipped = 0;

  // Refinement geometry: per-axis segment lists. Empty for finite-point
  // supports, where refinement is disabled.
  std::vector<std::vector<AxisSegment>> axis_segments;

  std::size_t size() const { return gvals.size(); }
  std::span<const double> point(std::size_t i) const {
    return {points.data() + i * dim, static_cast<std::size_t>(dim)};
  }
  std::span<const double> f(std::size_t i) const {
    return {fshift.data() + i * m, static_cast<std::size_t>(m)};
  }
  bool refinable() const { return !axis_segments.empty(); }

  // One-cell bracket around x along axis d, clipped to the segment containing
  // x (so refinement never crosses an exclusion gap or leaves the stage).
  // Returns false when no segment contains x.
  bool bracket(std::span<const double> x, int d, double& lo, double& hi) const;
};

// Tabulates a bounded stage. res = ticks per axis segment (>= 2). Log scale
// requires strictly positive segment bounds. Throws EvalError if every grid
// point fails to evaluate, std::invalid_argument on bad res/scale.
StageGrid build_grid(const ProblemSpec& p, const SupportSet& stage, int res,
                     GridScale scale = GridScale::Uniform);

// Evaluates and appends one explicit point (used for LP-oracle augmentation
// with refined maximizers). Returns false if evaluation fails there.
bool append_point(StageGrid& grid, const ProblemSpec& p, std::span<const double> x);

}  // namespace sharp
