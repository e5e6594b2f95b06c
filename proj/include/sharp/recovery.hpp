#pragma once

#include <optional>
#include <vector>

#include "sharp/dual.hpp"
#include "sharp/problem.hpp"

namespace sharp {

// Extremal-measure reconstruction from a converged dual certificate: the
// optimal measure lives on the maximizers of ±G(·;α*), so collect those and
// solve the moment system over them with nonnegative weights.

// Re-runs the inner maximization at cert.alpha on the certifying stage and
// returns every point whose ±G value is within tol_active of the supremum,
// deduplicated by merging points closer than 1e−6 × stage diameter.
// Throws std::runtime_error when nothing survives (grid too coarse).
std::vector<std::vector<double>> active_points(const ProblemSpec& p,
                                               const DualCertificate& cert,
                                               double tol_active,
                                               int grid_res = 4097,
                                               int refine_iters = 4);

// Solves Σ wᵢ = 1, Σ wᵢ f(xᵢ) = φ with w ≥ 0 by nonnegative least squares.
// Zero-weight atoms are pruned and the rest renormalized; returns nullopt when
// the residual exceeds 1e−7 on any moment row (no witness, the bound stands).
std::optional<DiscreteMeasure> match_moments(const std::vector<std::vector<double>>& points,
                                             const ProblemSpec& p);

struct VerifyReport {
  double bound_gap = 0.0;                 // |E_μ[g] − cert.bound|
  double max_constraint_violation = 0.0;  // max_j |E_μ[f_j] − φ_j|
  // max over atoms of |G(x;α) − bound|: the atoms must sit on the supporting
  // hyperplane for the measure to be extremal.
  double max_hyperplane_residual = 0.0;
};

VerifyReport verify_certificate(const ProblemSpec& p, const DualCertificate& cert,
                                const DiscreteMeasure& mu);

}  // namespace sharp
