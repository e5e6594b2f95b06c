#pragma once

#include <optional>

#include "sharp/grid.hpp"
#include "sharp/problem.hpp"

namespace sharp {

// Exact extremum of E[g] over probability measures supported on a finite
// point set, subject to the moment constraints. Ground truth for the dual
// solver on discretized problems.
struct OracleOutcome {
  bool feasible = false;
  double value = 0.0;
  DiscreteMeasure measure;  // basic optimal measure, <= m+1 atoms
  // Duals of the moment rows, oriented for the same direction sign the
  // solver uses: over the grid, sign*(g + <alpha, f - phi>) <= sign*value
  // with equality on the optimal atoms. That makes alpha the discrete dual
  // optimum and a near-optimal warm start for the continuous dual.
  std::vector<double> alpha;
};

OracleOutcome lp_bound(const ProblemSpec& p, const FinitePoints& grid, Direction dir);

// Same LP over an already-tabulated stage grid (reuses cached values).
OracleOutcome lp_bound(const ProblemSpec& p, const StageGrid& grid, Direction dir);

// Brute force over all measures supported on <= k grid points; validates the
// simplex path. Guards: #grid <= 25 and k <= m+2. Throws when infeasible or
// the guard is violated.
double enumerate_bound(const ProblemSpec& p, const FinitePoints& grid, int k,
                       Direction dir);

}  // namespace sharp
