#pragma once

#include <cstdint>
#include <optional>

#include "sharp/expr.hpp"
#include "sharp/problem.hpp"

namespace sharp {

// Analytic mean/variance results: exact bounds and two-atom witnesses for
// classical moment problems. These double as independent oracles for the
// dual solver in tests.

struct VarianceRange {
  double lower = 0.0;
  double upper = 0.0;
};

// Sharp variance range for a mean-λ distribution on [a, b]:
// 0 ≤ Var(X) ≤ (b−λ)(λ−a). Throws std::domain_error unless a < λ < b.
VarianceRange variance_range(double a, double b, double lambda);

struct JensenGapBounds {
  double lower = 0.0;
  double upper = 0.0;
  DiscreteMeasure mu_lower;  // two atoms {a, λ + σ²/(λ−a)}
  DiscreteMeasure mu_upper;  // two atoms {b, λ + σ²/(λ−b)}
};

// Sharp E[g] range on [a, b] given mean λ and variance σ², valid when g′ is
// strictly convex on [a, b] (asserted by the caller, not verified). Throws
// std::domain_error unless a < λ < b and 0 < σ² ≤ (b−λ)(λ−a).
JensenGapBounds jensen_gap_bounds(const Expr& g, double a, double b, double lambda,
                                  double sigma2);

struct MgfBounds {
  double lower = 0.0;
  double upper = 0.0;  // +∞ when s > 0
};

// Sharp bounds on E[e^{sX}] for X ≥ 0 with mean λ > 0 and variance σ² > 0
// (support limit a → ∞). Throws std::domain_error on s = 0 or bad λ, σ².
MgfBounds mgf_bounds(double lambda, double sigma2, double s);

struct PowerMeanBounds {
  std::optional<double> lower;
  std::optional<double> upper;  // absent for s > 2 (no finite upper bound)
};

// Sharp bounds on the power mean M_s = E[X^s]^{1/s} for X ≥ 0 with mean λ > 0
// and variance σ² > 0. s = 1 and s = 2 are pinned by the constraints
// (M₁ = λ, M₂ = √(λ²+σ²)); s = 0 throws std::domain_error.
PowerMeanBounds power_mean_bounds(double lambda, double sigma2, double s);

// Parametrization of all three-atom measures with mean λ and standard
// deviation σ: weights in the open simplex plus an angle.
struct ThreePointParam {
  double pa = 1.0 / 3.0;
  double pb = 1.0 / 3.0;
  double pc = 1.0 / 3.0;  // pa, pb, pc > 0 and pa + pb + pc = 1
  double theta = 0.0;
  double lambda = 0.0;
  double sigma = 1.0;  // standard deviation, > 0
};

struct ThreePointAtoms {
  double xa = 0.0;
  double xb = 0.0;
  double xc = 0.0;
};

// Atom locations for the given weights/angle; the resulting measure has mean
// λ and variance σ² identically in the parameters.
ThreePointAtoms three_point_atoms(const ThreePointParam& tp);

struct ThreePointOptions {
  int multistarts = 64;
  int sweeps = 60;  // coordinate-descent rounds per start
  std::uint64_t seed = 0;
};

// Best E[g] over three-atom measures with the given mean and variance, by
// multistart coordinate descent over (softmax-parametrized weights, θ).
// A heuristic inner approximation: the true extremum over all measures can
// only be at least as tight. Deterministic for a fixed seed; ties between
// starts resolve to the lowest start index.
double three_point_extremize(const Expr& g, double lambda, double sigma2,
                             Direction direction, const ThreePointOptions& opts = {});

// Sharp lower bound on P(X ≤ a) for X ≥ 0 with mean λ: max{1 − λ/a, 0}.
// Throws std::domain_error unless λ > 0 and a > 0.
double markov_bound(double lambda, double a);

// Sharp upper bound on P(X ≥ λ) subject to E[e^X] = 1 and X ≥ a:
// min{1, (1−e^a)/(e^λ − e^a)}. Throws std::domain_error unless a < 0, λ > a.
double jarzynski_bound(double a, double lambda);

}  // namespace sharp
