#include "sharp/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sharp/expr.hpp"

namespace sharp {

double AxisSegment::spacing_at(double x) const {
  if (res < 2) return 0.0;
  if (scale == GridScale::Uniform) return (hi - lo) / (res - 1);
  double ratio = std::pow(hi / lo, 1.0 / (res - 1));
  return std::max(x, lo) * (ratio - 1.0);
}

bool StageGrid::bracket(std::span<const double> x, int d, double& lo, double& hi) const {
  if (!refinable() || d < 0 || d >= dim) return false;
  const std::vector<AxisSegment>& segs = axis_segments[d];
  const AxisSegment* best = nullptr;
  double best_dist = 0.0;
  for (const AxisSegment& s : segs) {
    double dist = std::max({s.lo - x[d], x[d] - s.hi, 0.0});
    if (!best || dist < best_dist) {
      best = &s;
      best_dist = dist;
    }
  }
  if (!best || best_dist > 1e-9 * (1.0 + std::abs(x[d]))) return false;
  double h = best->spacing_at(x[d]);
  lo = std::max(best->lo, x[d] - h);
  hi = std::min(best->hi, x[d] + h);
  return lo <= hi;
}

namespace {

std::vector<double> segment_ticks(const AxisSegment& s) {
  std::vector<double> t;
  if (s.hi <= s.lo) {
    t.push_back(s.lo);
    return t;
  }
  t.reserve(s.res);
  if (s.scale == GridScale::Uniform) {
    double h = (s.hi - s.lo) / (s.res - 1);
    for (int i = 0; i < s.res - 1; ++i) t.push_back(s.lo + h * i);
  } else {
    double lr = std::log(s.hi / s.lo) / (s.res - 1);
    for (int i = 0; i < s.res - 1; ++i) t.push_back(s.lo * std::exp(lr * i));
  }
  t.push_back(s.hi);  // endpoint exact, never a rounded product
  return t;
}

}  // namespace

bool append_point(StageGrid& grid, const ProblemSpec& p, std::span<const double> x) {
  std::vector<double> scratch;
  std::vector<double> fs(grid.m);
  double gv;
  try {
    for (int i = 0; i < grid.m; ++i) {
      double v = p.constraints[i].f.eval(x, scratch);
      if (!std::isfinite(v)) return false;
      fs[i] = v - grid.phi[i];
    }
    gv = p.objective.eval(x, scratch);
  } catch (const EvalError&) {
    return false;
  }
  grid.points.insert(grid.points.end(), x.begin(), x.end());
  grid.fshift.insert(grid.fshift.end(), fs.begin(), fs.end());
  grid.gvals.push_back(gv);
  return true;
}

StageGrid build_grid(const ProblemSpec& p, const SupportSet& stage, int res, GridScale scale) {
  if (res < 2) throw std::invalid_argument("grid resolution must be >= 2 per axis");
  StageGrid grid;
  grid.dim = p.dim;
  grid.m = static_cast<int>(p.constraints.size());
  grid.phi = p.phi();

  auto add = [&](std::span<const double> x) {
    if (!append_point(grid, p, x)) ++grid.skipped;
  };

  if (const FinitePoints* fp = std::get_if<FinitePoints>(&stage.geometry)) {
    for (const auto& q : fp->points) add(q);
  } else {
    // Box and interval-union stages share the Cartesian-product path; a box
    // contributes one segment per axis, a 1-D union one segment per interval.
    grid.axis_segments.assign(grid.dim, {});
    if (const Box* b = std::get_if<Box>(&stage.geometry)) {
      for (int d = 0; d < grid.dim; ++d) {
        if (!std::isfinite(b->lower[d]) || !std::isfinite(b->upper[d]))
          throw std::invalid_argument("stage must be bounded before gridding");
        grid.axis_segments[d].push_back({b->lower[d], b->upper[d], res, scale});
      }
    } else {
      const Interval1DUnion& u = std::get<Interval1DUnion>(stage.geometry);
      for (const Interval& iv : u.intervals)
        grid.axis_segments[0].push_back({iv.lo, iv.hi, res, scale});
    }
    for (const auto& segs : grid.axis_segments)
      for (const AxisSegment& s : segs)
        if (s.scale == GridScale::Log && (s.lo <= 0.0 || s.hi <= 0.0))
          throw std::invalid_argument("log grid needs strictly positive bounds");

    std::vector<std::vector<double>> ticks(grid.dim);
    for (int d = 0; d < grid.dim; ++d) {
      for (const AxisSegment& s : grid.axis_segments[d]) {
        std::vector<double> t = segment_ticks(s);
        ticks[d].insert(ticks[d].end(), t.begin(), t.end());
      }
      if (ticks[d].empty()) return grid;  // empty stage: zero points
    }
    std::vector<std::size_t> idx(grid.dim, 0);
    std::vector<double> x(grid.dim);
    for (;;) {
      for (int d = 0; d < grid.dim; ++d) x[d] = ticks[d][idx[d]];
      add(x);
      int d = grid.dim - 1;
      while (d >= 0 && ++idx[d] == ticks[d].size()) idx[d--] = 0;
      if (d < 0) break;
    }
  }

  if (grid.size() == 0 && grid.skipped > 0)
    throw EvalError("every grid point failed to evaluate");
  return grid;
}

}  // namespace sharp
