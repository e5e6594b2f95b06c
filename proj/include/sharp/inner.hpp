#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sharp/grid.hpp"
#include "sharp/problem.hpp"

namespace sharp {

// Result of maximizing ±G(x;α) = ±(g(x) + ⟨α, f(x) − φ⟩) over a stage.
struct InnerResult {
  double value = 0.0;                            // sup of ±G
  std::vector<std::vector<double>> maximizers;   // within tol_active of sup, sorted
  std::vector<std::vector<double>> f_image;      // f(x) − φ at each maximizer
  std::size_t evaluations = 0;
};

struct InnerOptions {
  int refine_iters = 2;     // rounds of per-coordinate golden-section ascent
  int refine_candidates = 8;
  int golden_evals = 32;
  int workers = 1;
  double tol_active_scale = 1e-8;  // band: tol_active_scale * (1 + |value|)
};

// Core entry: maximize over a pre-built grid, then polish the top candidates
// with bracketed golden-section coordinate ascent (skipped on finite-point
// supports and when refine_iters == 0). Deterministic for fixed inputs,
// independent of the worker count.
InnerResult evaluate_inner(const ProblemSpec& p, const StageGrid& grid,
                           std::span<const double> alpha, int sign,
                           const InnerOptions& opts = {});

// Convenience entry matching the documented operation surface: builds a
// uniform grid over the (bounded) support, or over the final truncation stage
// when the support carries a schedule, and delegates to the grid form.
InnerResult evaluate_inner(const ProblemSpec& p, std::span<const double> alpha,
                           int sign, int grid_res, int refine_iters);

// ±(f(x*) − φ) for the lexicographically smallest maximizer x*; a subgradient
// of F± at the α the result was computed for.
std::vector<double> subgradient_from(const InnerResult& result, int sign);

}  // namespace sharp
