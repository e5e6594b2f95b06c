#include "sharp/problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sharp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

bool finite(double v) { return std::isfinite(v); }
}  // namespace

int SupportSet::dim() const {
  if (const Box* b = std::get_if<Box>(&geometry)) return b->dim();
  if (std::get_if<Interval1DUnion>(&geometry)) return 1;
  const FinitePoints& fp = std::get<FinitePoints>(geometry);
  return fp.points.empty() ? 0 : static_cast<int>(fp.points.front().size());
}

bool SupportSet::bounded() const {
  if (const Box* b = std::get_if<Box>(&geometry)) {
    for (int i = 0; i < b->dim(); ++i)
      if (!finite(b->lower[i]) || !finite(b->upper[i])) return false;
    return true;
  }
  if (const Interval1DUnion* u = std::get_if<Interval1DUnion>(&geometry)) {
    for (const Interval& iv : u->intervals)
      if (!finite(iv.lo) || !finite(iv.hi)) return false;
    return true;
  }
  return true;
}

bool SupportSet::contains(std::span<const double> point, double tol) const {
  if (const Box* b = std::get_if<Box>(&geometry)) {
    if (static_cast<int>(point.size()) != b->dim()) return false;
    for (int i = 0; i < b->dim(); ++i)
      if (point[i] < b->lower[i] - tol || point[i] > b->upper[i] + tol) return false;
    return true;
  }
  if (const Interval1DUnion* u = std::get_if<Interval1DUnion>(&geometry)) {
    if (point.size() != 1) return false;
    for (const Interval& iv : u->intervals)
      if (point[0] >= iv.lo - tol && point[0] <= iv.hi + tol) return true;
    return false;
  }
  const FinitePoints& fp = std::get<FinitePoints>(geometry);
  for (const auto& q : fp.points) {
    if (q.size() != point.size()) continue;
    double d = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) d = std::max(d, std::abs(q[i] - point[i]));
    if (d <= tol) return true;
  }
  return false;
}

void SupportSet::bounding_box(std::vector<double>& lo, std::vector<double>& hi) const {
  if (const Box* b = std::get_if<Box>(&geometry)) {
    lo = b->lower;
    hi = b->upper;
    return;
  }
  if (const Interval1DUnion* u = std::get_if<Interval1DUnion>(&geometry)) {
    lo.assign(1, kInf);
    hi.assign(1, -kInf);
    for (const Interval& iv : u->intervals) {
      lo[0] = std::min(lo[0], iv.lo);
      hi[0] = std::max(hi[0], iv.hi);
    }
    return;
  }
  const FinitePoints& fp = std::get<FinitePoints>(geometry);
  int n = dim();
  lo.assign(n, kInf);
  hi.assign(n, -kInf);
  for (const auto& q : fp.points)
    for (int i = 0; i < n; ++i) {
      lo[i] = std::min(lo[i], q[i]);
      hi[i] = std::max(hi[i], q[i]);
    }
}

double SupportSet::diameter() const {
  std::vector<double> lo, hi;
  bounding_box(lo, hi);
  double d = 0.0;
  for (std::size_t i = 0; i < lo.size(); ++i) d = std::max(d, hi[i] - lo[i]);
  return std::max(d, 0.0);
}

std::vector<double> ProblemSpec::phi() const {
  std::vector<double> v(constraints.size());
  for (std::size_t i = 0; i < constraints.size(); ++i) v[i] = constraints[i].phi;
  return v;
}

namespace {

void validate_schedule(const TruncationSchedule& sch, std::vector<Diagnostic>& out) {
  if (!(sch.r0 > 0.0) || !(sch.rho > 1.0) || sch.max_stages < 1)
    out.push_back({"InvalidSchedule", "need r0 > 0, rho > 1, max_stages >= 1"});
}

void validate_support(const SupportSet& s, int n, std::vector<Diagnostic>& out) {
  if (s.schedule) validate_schedule(*s.schedule, out);
  bool has_exclusions = s.schedule && !s.schedule->exclusions.empty();

  if (const Box* b = std::get_if<Box>(&s.geometry)) {
    if (b->dim() != n)
      out.push_back({"DimensionMismatch", "support dim != problem dim"});
    if (b->upper.size() != b->lower.size() ||
        b->lower_open.size() != b->lower.size() ||
        b->upper_open.size() != b->lower.size()) {
      out.push_back({"InvalidBox", "mismatched field lengths"});
      return;
    }
    for (int i = 0; i < b->dim(); ++i) {
      if (std::isnan(b->lower[i]) || std::isnan(b->upper[i]) || b->lower[i] > b->upper[i])
        out.push_back({"InvalidBox", "lower > upper at coordinate " + std::to_string(i + 1)});
      bool unbounded = !finite(b->lower[i]) || !finite(b->upper[i]);
      bool open_finite = (b->lower_open[i] && finite(b->lower[i])) ||
                         (b->upper_open[i] && finite(b->upper[i]));
      if (unbounded && !s.schedule)
        out.push_back({"UnboundedWithoutSchedule",
                       "coordinate " + std::to_string(i + 1) + " is unbounded"});
      if (open_finite && !s.schedule)
        out.push_back({"OpenEndpointWithoutSchedule",
                       "coordinate " + std::to_string(i + 1) + " has an open finite endpoint"});
    }
    if (has_exclusions && b->dim() != 1)
      out.push_back({"ExclusionRequiresDim1", "exclusion points need a 1-D support"});
    return;
  }

  if (const Interval1DUnion* u = std::get_if<Interval1DUnion>(&s.geometry)) {
    if (n != 1) out.push_back({"DimensionMismatch", "interval union support is 1-D"});
    if (u->intervals.empty()) out.push_back({"EmptySupport", "no intervals"});
    for (std::size_t j = 0; j < u->intervals.size(); ++j) {
      const Interval& iv = u->intervals[j];
      bool degenerate_open = iv.lo == iv.hi && (iv.lo_open || iv.hi_open);
      if (std::isnan(iv.lo) || std::isnan(iv.hi) || iv.lo > iv.hi || degenerate_open)
        out.push_back({"EmptyInterval", "interval " + std::to_string(j)});
      if (j > 0) {
        const Interval& prev = u->intervals[j - 1];
        bool touching_closed = prev.hi == iv.lo && !prev.hi_open && !iv.lo_open;
        if (prev.hi > iv.lo || touching_closed)
          out.push_back({"IntervalsNotDisjoint", "intervals " + std::to_string(j - 1) +
                                                     "," + std::to_string(j)});
      }
      if ((!finite(iv.lo) || !finite(iv.hi)) && !s.schedule)
        out.push_back({"UnboundedWithoutSchedule", "interval " + std::to_string(j)});
      if (((iv.lo_open && finite(iv.lo)) || (iv.hi_open && finite(iv.hi))) && !s.schedule)
        out.push_back({"OpenEndpointWithoutSchedule", "interval " + std::to_string(j)});
    }
    return;
  }

  const FinitePoints& fp = std::get<FinitePoints>(s.geometry);
  if (fp.points.empty()) {
    out.push_back({"EmptySupport", "no points"});
    return;
  }
  for (const auto& q : fp.points)
    if (static_cast<int>(q.size()) != n) {
      out.push_back({"DimensionMismatch", "point dim != problem dim"});
      break;
    }
  for (std::size_t i = 0; i < fp.points.size(); ++i)
    for (std::size_t j = i + 1; j < fp.points.size(); ++j)
      if (fp.points[i] == fp.points[j]) {
        out.push_back({"FinitePointsDuplicate", "points " + std::to_string(i) + "," +
                                                    std::to_string(j)});
        i = fp.points.size();
        break;
      }
  if (has_exclusions)
    out.push_back({"ExclusionRequiresDim1", "exclusions are meaningless on finite sets"});
}

}  // namespace

std::vector<Diagnostic> validate_problem(const ProblemSpec& p) {
  std::vector<Diagnostic> out;
  if (p.dim < 1) out.push_back({"InvalidDim", "dim must be >= 1"});
  if (p.constraints.empty()) out.push_back({"EmptyConstraints", "need m >= 1"});
  for (std::size_t i = 0; i < p.constraints.size(); ++i) {
    if (!finite(p.constraints[i].phi))
      out.push_back({"NonFinitePhi", "constraint " + std::to_string(i)});
    if (p.constraints[i].f.min_dim() > p.dim)
      out.push_back({"DimensionMismatch",
                     "constraint " + std::to_string(i) + " references x" +
                         std::to_string(p.constraints[i].f.min_dim())});
  }
  if (p.objective.min_dim() > p.dim)
    out.push_back({"DimensionMismatch",
                   "objective references x" + std::to_string(p.objective.min_dim())});
  validate_support(p.support, p.dim, out);
  return out;
}

std::vector<Diagnostic> validate_measure(const DiscreteMeasure& mu, const SupportSet& s) {
  std::vector<Diagnostic> out;
  if (mu.atoms.size() != mu.weights.size()) {
    out.push_back({"MeasureShape", "atom/weight count mismatch"});
    return out;
  }
  if (mu.atoms.empty()) out.push_back({"MeasureEmpty", "no atoms"});
  double sum = 0.0;
  for (std::size_t i = 0; i < mu.weights.size(); ++i) {
    if (!(mu.weights[i] >= -1e-14))
      out.push_back({"NegativeWeight", "atom " + std::to_string(i)});
    sum += mu.weights[i];
  }
  if (std::abs(sum - 1.0) > 1e-12)
    out.push_back({"WeightsNotNormalized", "sum = " + std::to_string(sum)});
  for (std::size_t i = 0; i < mu.atoms.size(); ++i)
    for (std::size_t j = i + 1; j < mu.atoms.size(); ++j)
      if (mu.atoms[i] == mu.atoms[j])
        out.push_back({"DuplicateAtoms", std::to_string(i) + "," + std::to_string(j)});
  for (std::size_t i = 0; i < mu.atoms.size(); ++i)
    if (!s.contains(mu.atoms[i]))
      out.push_back({"AtomOutsideSupport", "atom " + std::to_string(i)});
  return out;
}

double measure_expectation(const DiscreteMeasure& mu, const Expr& e) {
  std::vector<double> scratch;
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.atoms.size(); ++i)
    acc += mu.weights[i] * e.eval(mu.atoms[i], scratch);
  return acc;
}

namespace {

// Removes the open one-sided neighborhood of an exclusion point from a list
// of closed intervals. The excluded point itself stays in the set.
std::vector<Interval> apply_exclusion(const std::vector<Interval>& in, const Exclusion& ex,
                                      double delta) {
  double a = ex.side == Side::Right ? ex.at : ex.at - delta;
  double b = ex.side == Side::Right ? ex.at + delta : ex.at;
  // Remove the open interval (a, b), keeping endpoints a and b.
  std::vector<Interval> out;
  for (const Interval& iv : in) {
    if (iv.hi <= a || iv.lo >= b) {
      out.push_back(iv);
      continue;
    }
    if (iv.lo <= a) out.push_back({iv.lo, a, false, false});
    if (iv.hi >= b) out.push_back({b, iv.hi, false, false});
  }
  return out;
}

double open_shift(const TruncationSchedule& sch, double w0, int k) {
  double base = std::min(sch.r0, std::max(w0, 0.0) / 4.0);
  return base / std::pow(sch.rho, k);
}

}  // namespace

SupportSet truncation_stage(const SupportSet& s, int k) {
  if (!s.schedule) {
    if (!s.bounded())
      throw std::logic_error("unbounded support requires a truncation schedule");
    return SupportSet{s.geometry, std::nullopt};
  }
  const TruncationSchedule& sch = *s.schedule;
  if (k < 0 || k >= sch.max_stages)
    throw std::out_of_range("truncation stage out of schedule range");
  double R = sch.r0 * std::pow(sch.rho, k);
  double excl_delta = sch.r0 / std::pow(sch.rho, k);

  if (std::holds_alternative<FinitePoints>(s.geometry))
    return SupportSet{s.geometry, std::nullopt};

  if (const Box* b = std::get_if<Box>(&s.geometry)) {
    Box stage = *b;
    for (int i = 0; i < stage.dim(); ++i) {
      double lo = std::max(stage.lower[i], -R);
      double hi = std::min(stage.upper[i], R);
      double w0 = std::min(stage.upper[i], sch.r0) - std::max(stage.lower[i], -sch.r0);
      if (stage.lower_open[i] && finite(stage.lower[i]) && lo == stage.lower[i])
        lo += open_shift(sch, w0, k);
      if (stage.upper_open[i] && finite(stage.upper[i]) && hi == stage.upper[i])
        hi -= open_shift(sch, w0, k);
      stage.lower[i] = lo;
      stage.upper[i] = hi;
      stage.lower_open[i] = stage.upper_open[i] = false;
    }
    if (stage.dim() == 1 && !sch.exclusions.empty()) {
      std::vector<Interval> ivs;
      if (stage.lower[0] <= stage.upper[0])
        ivs.push_back({stage.lower[0], stage.upper[0], false, false});
      for (const Exclusion& ex : sch.exclusions) ivs = apply_exclusion(ivs, ex, excl_delta);
      return SupportSet{Interval1DUnion{std::move(ivs)}, std::nullopt};
    }
    return SupportSet{std::move(stage), std::nullopt};
  }

  const Interval1DUnion& u = std::get<Interval1DUnion>(s.geometry);
  std::vector<Interval> ivs;
  for (const Interval& iv : u.intervals) {
    double lo = std::max(iv.lo, -R);
    double hi = std::min(iv.hi, R);
    double w0 = std::min(iv.hi, sch.r0) - std::max(iv.lo, -sch.r0);
    if (iv.lo_open && finite(iv.lo) && lo == iv.lo) lo += open_shift(sch, w0, k);
    if (iv.hi_open && finite(iv.hi) && hi == iv.hi) hi -= open_shift(sch, w0, k);
    if (lo <= hi) ivs.push_back({lo, hi, false, false});
  }
  for (const Exclusion& ex : sch.exclusions) ivs = apply_exclusion(ivs, ex, excl_delta);
  return SupportSet{Interval1DUnion{std::move(ivs)}, std::nullopt};
}

}  // namespace sharp
