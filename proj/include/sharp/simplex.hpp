#pragma once

#include <vector>

#include "sharp/linalg.hpp"

namespace sharp {

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  double objective = 0.0;
  std::vector<double> x;
  // For Optimal: duals of the equality rows (zero for rows dropped as
  // redundant), satisfying c_j >= y^T A_j on every column.
  std::vector<double> y;
  // For Infeasible: y with y^T A_j <= 0 for every column j and y^T b > 0
  // (a separating functional in row space).
  std::vector<double> farkas;
};

// Minimizes c^T x subject to A x = b, x >= 0, with a dense two-phase simplex
// using Bland's anti-cycling rule. Equality rows are kept exact; feas_tol only
// decides whether the phase-one artificial objective counts as zero.
LpResult solve_lp(const Mat& A, const std::vector<double>& b,
                  const std::vector<double>& c, double feas_tol = 1e-9);

}  // namespace sharp
