#pragma once

#include <optional>
#include <span>
#include <vector>

#include "sharp/grid.hpp"
#include "sharp/problem.hpp"

namespace sharp {

// Outer dual solver: minimizes F±(α) = sup_x ±(g(x) + ⟨α, f(x) − φ⟩) over α
// with cutting planes, one truncation stage at a time. Every evaluated α
// yields a one-sided bound on E[g] valid for all feasible measures, so the
// iterate history doubles as a certificate trail.

struct DualCertificate {
  std::vector<double> alpha;
  double bound = 0.0;
  Direction direction = Direction::Upper;
  // Maximizers of ±G(·;α) on the certifying stage; the extremal measure is
  // supported on a subset of these.
  std::vector<std::vector<double>> active_points;
  int stage = 0;
  double inner_tol = 0.0;  // activity band used when collecting the points
};

enum class FeasStatus { Feasible, Boundary, Infeasible };

struct FeasibilityReport {
  FeasStatus status = FeasStatus::Feasible;
  // Feasible / Boundary: how far φ can move inside hull{f(x)} along the worst
  // of the coordinate and diagonal probe directions.
  double margin = 0.0;
  // Infeasible: separating α (‖α‖∞ = 1) with ⟨α, f(x) − φ⟩ > ε on the whole
  // grid, which certifies that no feasible measure exists on this stage.
  std::vector<double> alpha;
  double epsilon = 0.0;
  std::size_t grid_points = 0;
};

struct IterateRecord {
  std::vector<double> alpha;
  double value = 0.0;  // F±(α), the raw sup; the offered bound is ±value
};

struct StageRecord {
  int stage = 0;
  double bound = 0.0;  // NaN when skipped
  std::optional<double> oracle_value;
  int iterations = 0;
  bool skipped = false;  // stage failed feasibility; no dual run happened
};

enum class SolveStatus { Ok, NonConvergence, Infeasible, BoundaryPhi };

struct BoundResult {
  Direction direction = Direction::Upper;
  // ±∞ when the stage bounds diverge (a genuine answer), vacuous ∓∞ when the
  // problem is infeasible, NaN when φ sits on the moment-set boundary.
  double bound = 0.0;
  std::optional<DualCertificate> certificate;
  std::optional<DiscreteMeasure> measure;
  std::optional<double> oracle_gap;  // |bound − discretized LP optimum|
  std::vector<IterateRecord> history;
  std::vector<StageRecord> stages;
  FeasibilityReport feasibility;  // from the last stage examined
  SolveStatus status = SolveStatus::Ok;
  // True when the run ended by meeting a gap tolerance (or by a definitive
  // divergence verdict) rather than by exhausting a budget or the schedule.
  bool converged = false;
};

struct SolverParams {
  int outer_iters = 200;  // cutting-plane iterations per stage
  int grid_res = 513;     // ticks per axis segment
  int refine_iters = 2;   // golden-section rounds inside inner evaluations
  double tol_gap_abs = 1e-7;
  double tol_gap_rel = 1e-9;
  double trust_radius = 1.0;  // initial half-width of the α box
  double divergence_threshold = 1e12;
  int workers = 1;
  GridScale grid_scale = GridScale::Uniform;
  int polish_rounds = 2;  // per-coordinate α polish on the terminal stage
};

double tol_gap(const SolverParams& params, double scale);

// Tests φ against hull{f(x) : x ∈ grid}: outside → Infeasible with a
// separating certificate, inside with slack below boundary_tol (1e−6 scaled
// by 1 + ‖φ‖∞) → Boundary, else Feasible with the probed margin.
// Throws std::invalid_argument when the grid has fewer than m+2 points.
FeasibilityReport check_feasibility(const ProblemSpec& p, const StageGrid& grid);

// Convenience form over the final truncation stage at the given resolution.
FeasibilityReport check_feasibility(const ProblemSpec& p, int grid_res);

BoundResult solve_dual(const ProblemSpec& p, const SolverParams& params = {});

// One-sided bound from a single α: −F₋(α) for Lower, F₊(α) for Upper,
// evaluated on the final truncation stage. Valid for every feasible measure
// whatever α is; sharp at the dual optimum.
double loose_bound(const ProblemSpec& p, std::span<const double> alpha,
                   int grid_res = 4097, int refine_iters = 2);

}  // namespace sharp
