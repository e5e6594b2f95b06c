#include "sharp/oracle.hpp"

#include <cmath>
#include <stdexcept>

#include "sharp/linalg.hpp"
#include "sharp/simplex.hpp"

namespace sharp {

namespace {

// Columns with a non-finite objective value cannot enter a finite-valued
// optimal measure; divergent stages are detected upstream before the LP runs.
bool usable(double g) { return std::isfinite(g); }

}  // namespace

OracleOutcome lp_bound(const ProblemSpec& p, const StageGrid& grid, Direction dir) {
  const int m = static_cast<int>(p.constraints.size());
  if (grid.m != m)
    throw std::invalid_argument("grid was tabulated for a different problem");
  if (grid.size() < static_cast<std::size_t>(m) + 1)
    throw std::invalid_argument("oracle grid needs at least m+1 points");

  std::vector<std::size_t> cols;
  cols.reserve(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j)
    if (usable(grid.gvals[j])) cols.push_back(j);
  if (cols.empty()) throw std::invalid_argument("no usable oracle grid points");

  // Shifted formulation: sum w (f(x) − φ) = 0, sum w = 1. Keeps every row on
  // a comparable scale regardless of |φ|.
  Mat a(m + 1, static_cast<int>(cols.size()));
  std::vector<double> c(cols.size());
  for (std::size_t jc = 0; jc < cols.size(); ++jc) {
    std::span<const double> fs = grid.f(cols[jc]);
    for (int i = 0; i < m; ++i) a(i, static_cast<int>(jc)) = fs[i];
    a(m, static_cast<int>(jc)) = 1.0;
    double g = grid.gvals[cols[jc]];
    c[jc] = dir == Direction::Lower ? g : -g;
  }
  std::vector<double> b(m + 1, 0.0);
  b[m] = 1.0;

  LpResult lp = solve_lp(a, b, c);
  OracleOutcome out;
  if (lp.status == LpStatus::Infeasible) return out;
  if (lp.status != LpStatus::Optimal)
    throw std::runtime_error("measure LP unexpectedly unbounded");

  out.feasible = true;
  out.value = dir == Direction::Lower ? lp.objective : -lp.objective;
  if (lp.y.size() == static_cast<std::size_t>(m) + 1) {
    out.alpha.assign(lp.y.begin(), lp.y.begin() + m);
    if (dir == Direction::Lower)
      for (double& v : out.alpha) v = -v;
  }
  double total = 0.0;
  for (std::size_t jc = 0; jc < cols.size(); ++jc) {
    if (lp.x[jc] <= 1e-12) continue;
    std::span<const double> pt = grid.point(cols[jc]);
    out.measure.atoms.emplace_back(pt.begin(), pt.end());
    out.measure.weights.push_back(lp.x[jc]);
    total += lp.x[jc];
  }
  if (total > 0.0)
    for (double& w : out.measure.weights) w /= total;
  return out;
}

OracleOutcome lp_bound(const ProblemSpec& p, const FinitePoints& grid, Direction dir) {
  SupportSet stage;
  stage.geometry = grid;
  return lp_bound(p, build_grid(p, stage, 2), dir);
}

double enumerate_bound(const ProblemSpec& p, const FinitePoints& grid, int k,
                       Direction dir) {
  const int m = static_cast<int>(p.constraints.size());
  if (grid.points.size() > 25)
    throw std::invalid_argument("enumerate_bound guard: more than 25 grid points");
  if (k < 1 || k > m + 2)
    throw std::invalid_argument("enumerate_bound guard: k must be in [1, m+2]");

  SupportSet stage;
  stage.geometry = grid;
  StageGrid tab = build_grid(p, stage, 2);
  std::vector<std::size_t> usable_pts;
  for (std::size_t j = 0; j < tab.size(); ++j)
    if (usable(tab.gvals[j])) usable_pts.push_back(j);

  const int n = static_cast<int>(usable_pts.size());
  // Vertices of the measure polytope have affinely independent support of
  // size <= m+1, so larger subsets add no extreme values.
  const int rmax = std::min(k, m + 1);

  bool found = false;
  double best = 0.0;
  std::vector<int> pick;
  std::vector<double> b(m + 1, 0.0);
  b[m] = 1.0;

  auto consider = [&]() {
    int r = static_cast<int>(pick.size());
    Mat a(m + 1, r);
    for (int jc = 0; jc < r; ++jc) {
      std::span<const double> fs = tab.f(usable_pts[pick[jc]]);
      for (int i = 0; i < m; ++i) a(i, jc) = fs[i];
      a(m, jc) = 1.0;
    }
    int rank = 0;
    std::vector<double> w = lstsq(a, b, &rank);
    if (rank < r) return;  // dependent columns: covered by a smaller subset
    if (residual_inf(a, w, b) > 1e-9) return;
    for (double wi : w)
      if (wi < -1e-12) return;
    double val = 0.0;
    for (int jc = 0; jc < r; ++jc)
      val += w[jc] * tab.gvals[usable_pts[pick[jc]]];
    if (!found || (dir == Direction::Lower ? val < best : val > best)) {
      best = val;
      found = true;
    }
  };

  auto rec = [&](auto&& self, int start, int remaining) -> void {
    if (remaining == 0) {
      consider();
      return;
    }
    for (int i = start; i + remaining <= n; ++i) {
      pick.push_back(i);
      self(self, i + 1, remaining - 1);
      pick.pop_back();
    }
  };
  for (int r = 1; r <= rmax; ++r) rec(rec, 0, r);

  if (!found) throw std::runtime_error("no feasible measure on the given grid");
  return best;
}

}  // namespace sharp
