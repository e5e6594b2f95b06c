#include "sharp/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sharp {

namespace {
constexpr double kReducedCostTol = 1e-11;
constexpr double kPivotTol = 1e-11;
// A column can show a slightly negative reduced cost from accumulated
// roundoff while its tableau entries are numerically zero; such a "ray" is
// noise, not unboundedness, unless the reduced cost is decisively negative.
constexpr double kSevereCostTol = 1e-7;
}  // namespace

// Dense tableau over columns [original(n) | artificial(m) | rhs]. Bland's rule
// (lowest eligible index enters, lowest basic index breaks ratio ties) keeps
// the iteration finite on degenerate instances.
LpResult solve_lp(const Mat& A, const std::vector<double>& b,
                  const std::vector<double>& c, double feas_tol) {
  const std::size_t n = A.cols;
  std::size_t m = A.rows;
  const std::size_t NC = n + A.rows;  // fixed column count (rows may be dropped)
  const std::size_t W = NC + 1;       // tableau width incl. rhs

  // Equilibration, columns first and then rows: columns to unit max so that
  // a moment row spanning many decades (x^2 near 0 versus at a huge stage
  // edge) cannot push the small-x entries below the pivot tolerance, rows to
  // unit max so the absolute tolerances are scale-free. Column scaling only
  // changes the units of x (undone on extraction); duals are untouched.
  std::vector<double> cscale(n, 1.0);
  for (std::size_t j = 0; j < n; ++j) {
    double mx = 0.0;
    for (std::size_t i = 0; i < m; ++i) mx = std::max(mx, std::abs(A(i, j)));
    if (mx > 0.0) cscale[j] = 1.0 / mx;
  }
  std::vector<double> rscale(m, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      mx = std::max(mx, std::abs(A(i, j)) * cscale[j]);
    if (mx > 0.0) rscale[i] = 1.0 / mx;
  }

  std::vector<double> T(m * W, 0.0);
  std::vector<double> sign(m, 1.0);
  std::vector<std::size_t> basis(m);
  std::vector<std::size_t> rowid(m);  // original row index (for Farkas signs)
  for (std::size_t i = 0; i < m; ++i) {
    sign[i] = b[i] < 0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j)
      T[i * W + j] = sign[i] * rscale[i] * A(i, j) * cscale[j];
    T[i * W + n + i] = 1.0;
    T[i * W + W - 1] = sign[i] * rscale[i] * b[i];
    basis[i] = n + i;
    rowid[i] = i;
  }

  std::vector<double> d(NC, 0.0);

  auto pivot = [&](std::size_t r, std::size_t e) {
    double p = T[r * W + e];
    for (std::size_t j = 0; j < W; ++j) T[r * W + j] /= p;
    T[r * W + e] = 1.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (i == r) continue;
      double f = T[i * W + e];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < W; ++j) T[i * W + j] -= f * T[r * W + j];
      T[i * W + e] = 0.0;
      if (std::abs(T[i * W + W - 1]) < 1e-13) T[i * W + W - 1] = 0.0;
    }
    double f = d[e];
    if (f != 0.0)
      for (std::size_t j = 0; j < NC; ++j) d[j] -= f * T[r * W + j];
    d[e] = 0.0;
    basis[r] = e;
  };

  // allowed_cols: number of leading columns eligible to enter; phase1 marks
  // the artificial-sum objective, which is bounded below and so can never be
  // legitimately unbounded.
  auto run = [&](std::size_t allowed_cols, bool phase1) -> LpStatus {
    auto colcost = [&](std::size_t j) {
      if (phase1) return j >= n ? 1.0 : 0.0;
      return j < n ? c[j] * cscale[j] : 0.0;
    };
    auto fresh_cost = [&](std::size_t j) {
      double v = colcost(j);
      for (std::size_t i = 0; i < m; ++i) {
        double cb = colcost(basis[i]);
        if (cb != 0.0) v -= cb * T[i * W + j];
      }
      return v;
    };
    bool verified = false;  // reduced costs recomputed since the last pivot
    for (long iter = 0; iter < 200000; ++iter) {
      // The incrementally updated reduced costs drift apart from the tableau
      // over long runs; resync them wholesale now and then.
      if (iter > 0 && iter % 64 == 0 && !verified)
        for (std::size_t j = 0; j < NC; ++j) d[j] = fresh_cost(j);
      std::size_t enter = allowed_cols;
      for (std::size_t j = 0; j < allowed_cols; ++j) {
        if (d[j] >= -kReducedCostTol) continue;
        bool has_pivot = false;
        for (std::size_t i = 0; i < m; ++i)
          if (T[i * W + j] > kPivotTol) {
            has_pivot = true;
            break;
          }
        if (!has_pivot) {
          if (d[j] < -kSevereCostTol) {
            // No usable pivot yet a decisively negative cost: either drift or
            // a true ray. Recompute the cost from the tableau before trusting
            // an Unbounded verdict, and never trust one in phase one.
            d[j] = fresh_cost(j);
            if (d[j] < -kSevereCostTol && !phase1) return LpStatus::Unbounded;
          }
          continue;  // roundoff ghost column
        }
        enter = j;
        break;
      }
      if (enter == allowed_cols) {
        // Apparent optimality can be an artifact of drifted pricing, and the
        // slip is amplified by whatever unit the caller scaled the objective
        // with. Recompute every reduced cost once and only accept the verdict
        // if it survives.
        if (verified) return LpStatus::Optimal;
        for (std::size_t j = 0; j < NC; ++j) d[j] = fresh_cost(j);
        verified = true;
        continue;
      }
      verified = false;
      std::size_t leave = m;
      double best = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        double t = T[i * W + enter];
        if (t > kPivotTol) {
          double ratio = T[i * W + W - 1] / t;
          // The tie window must scale with the ratio, or Bland's tie-break
          // stops seeing degenerate ties and the iteration can cycle.
          double tw = 1e-9 * (1.0 + std::abs(best));
          if (leave == m || ratio < best - tw) {
            leave = i;
            best = ratio;
          } else if (ratio < best + tw && basis[i] < basis[leave]) {
            leave = i;
            best = std::min(best, ratio);
          }
        }
      }
      if (leave == m) return LpStatus::Unbounded;
      pivot(leave, enter);
    }
    throw std::runtime_error("simplex iteration guard exceeded");
  };

  // Phase one: minimize the artificial sum.
  for (std::size_t j = 0; j < NC; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += T[i * W + j];
    d[j] = (j >= n ? 1.0 : 0.0) - s;
  }
  if (run(NC, true) == LpStatus::Unbounded)
    throw std::runtime_error("phase-one LP cannot be unbounded");

  double bscale = 1.0;
  for (std::size_t i = 0; i < m; ++i)
    bscale = std::max(bscale, std::abs(b[i]) * rscale[i]);
  double infeas = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    if (basis[i] >= n) infeas += T[i * W + W - 1];

  LpResult res;
  if (infeas > feas_tol * bscale) {
    res.status = LpStatus::Infeasible;
    // Phase-one duals: the reduced cost of artificial column i is 1 - y_i;
    // undo the row sign flips and the equilibration to get a certificate for
    // the original rows.
    res.farkas.assign(A.rows, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      res.farkas[rowid[i]] = sign[i] * rscale[rowid[i]] * (1.0 - d[n + i]);
    res.objective = infeas;
    return res;
  }

  // Drive leftover artificials out of the basis; rows that cannot pivot on an
  // original column are redundant and dropped.
  for (std::size_t i = 0; i < m;) {
    if (basis[i] < n) {
      ++i;
      continue;
    }
    std::size_t e = n;
    for (std::size_t j = 0; j < n; ++j)
      if (std::abs(T[i * W + j]) > 1e-9) {
        e = j;
        break;
      }
    if (e < n) {
      pivot(i, e);
      ++i;
    } else {
      for (std::size_t r = i + 1; r < m; ++r) {
        std::copy(T.begin() + r * W, T.begin() + (r + 1) * W, T.begin() + (r - 1) * W);
        basis[r - 1] = basis[r];
        rowid[r - 1] = rowid[r];
        sign[r - 1] = sign[r];
      }
      --m;
      T.resize(m * W);
    }
  }

  // Phase two on the real objective (in column-scaled units).
  for (std::size_t j = 0; j < NC; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      if (basis[i] < n) s += c[basis[i]] * cscale[basis[i]] * T[i * W + j];
    d[j] = (j < n ? c[j] * cscale[j] : 0.0) - s;
  }
  LpStatus st = run(n, false);
  res.status = st;
  if (st == LpStatus::Unbounded) return res;

  res.x.assign(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    if (basis[i] < n)
      res.x[basis[i]] = cscale[basis[i]] * std::max(T[i * W + W - 1], 0.0);
  double obj = 0.0;
  for (std::size_t j = 0; j < n; ++j) obj += c[j] * res.x[j];
  res.objective = obj;
  // Row duals: artificial column i still holds B^{-1} e_i, so its reduced
  // cost is -y_i in the scaled row space (d is fresh here: run() only
  // declares optimality after a full reprice). Undo the sign flip and the
  // equilibration to express the duals for the original rows.
  res.y.assign(A.rows, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t orig = rowid[i];
    res.y[orig] = -d[n + orig] * sign[i] * rscale[orig];
  }
  res.status = LpStatus::Optimal;
  return res;
}

}  // namespace sharp
