#include "sharp/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sharp/grid.hpp"
#include "sharp/inner.hpp"
#include "sharp/linalg.hpp"

namespace sharp {

namespace {

constexpr double kTolMoments = 1e-7;

double sup_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double r = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r = std::max(r, std::abs(a[i] - b[i]));
  return r;
}

}  // namespace

std::vector<std::vector<double>> active_points(const ProblemSpec& p,
                                               const DualCertificate& cert,
                                               double tol_active, int grid_res,
                                               int refine_iters) {
  if (!(tol_active > 0.0)) throw std::invalid_argument("tol_active must be positive");
  const int sign = cert.direction == Direction::Upper ? +1 : -1;
  SupportSet stage = truncation_stage(p.support, cert.stage);
  StageGrid grid = build_grid(p, stage, grid_res);

  InnerOptions opts;
  opts.refine_iters = refine_iters;
  opts.refine_candidates = 32;
  opts.golden_evals = 48;
  // The inner band is tol_active_scale × (1 + |value|); pick the scale so the
  // absolute band comes out as tol_active at the certificate's value level.
  opts.tol_active_scale = tol_active / (1.0 + std::abs(cert.bound));
  InnerResult r = evaluate_inner(p, grid, cert.alpha, sign, opts);

  double merge_radius = 1e-6 * stage.diameter();
  std::vector<std::vector<double>> kept;
  for (const std::vector<double>& x : r.maximizers) {
    bool dup = false;
    for (const std::vector<double>& y : kept) {
      if (sup_dist(x, y) < merge_radius) {
        dup = true;
        break;
      }
    }
    if (!dup) kept.push_back(x);
  }
  if (kept.empty())
    throw std::runtime_error("empty active set: inner grid too coarse for the certificate");
  return kept;
}

std::optional<DiscreteMeasure> match_moments(const std::vector<std::vector<double>>& points,
                                             const ProblemSpec& p) {
  if (points.empty()) throw std::invalid_argument("match_moments needs at least one point");
  const int m = p.m();
  const std::size_t n = points.size();
  const std::vector<double> phi = p.phi();

  // Shifted moment system: Σ w (f(x) − φ) = 0, Σ w = 1, every row at unit scale.
  Mat A(m + 1, n);
  std::vector<double> scratch;
  for (std::size_t j = 0; j < n; ++j) {
    try {
      for (int i = 0; i < m; ++i) {
        double fv = p.constraints[i].f.eval(points[j], scratch);
        if (!std::isfinite(fv)) return std::nullopt;
        A(i, j) = fv - phi[i];
      }
    } catch (const EvalError&) {
      return std::nullopt;
    }
    A(m, j) = 1.0;
  }
  std::vector<double> b(m + 1, 0.0);
  b[m] = 1.0;

  std::vector<double> w = nnls(A, b);
  if (residual_inf(A, w, b) > kTolMoments) return std::nullopt;

  DiscreteMeasure mu;
  std::vector<std::size_t> cols;
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (w[j] <= 1e-12) continue;
    mu.atoms.push_back(points[j]);
    mu.weights.push_back(w[j]);
    cols.push_back(j);
    total += w[j];
  }
  if (mu.atoms.empty() || !(total > 0.0)) return std::nullopt;
  for (double& wv : mu.weights) wv /= total;

  // Pruning and renormalization move the residual; check the measure we
  // actually return, not the raw NNLS iterate.
  for (int i = 0; i <= m; ++i) {
    double s = -b[i];
    for (std::size_t j = 0; j < cols.size(); ++j) s += A(i, cols[j]) * mu.weights[j];
    if (std::abs(s) > kTolMoments) return std::nullopt;
  }
  return mu;
}

VerifyReport verify_certificate(const ProblemSpec& p, const DualCertificate& cert,
                                const DiscreteMeasure& mu) {
  VerifyReport rep;
  rep.bound_gap = std::abs(measure_expectation(mu, p.objective) - cert.bound);
  const std::vector<double> phi = p.phi();
  for (int i = 0; i < p.m(); ++i) {
    double e = measure_expectation(mu, p.constraints[i].f);
    rep.max_constraint_violation =
        std::max(rep.max_constraint_violation, std::abs(e - phi[i]));
  }
  std::vector<double> scratch;
  for (const std::vector<double>& x : mu.atoms) {
    double gval = p.objective.eval(x, scratch);
    for (int i = 0; i < p.m(); ++i)
      gval += cert.alpha[i] * (p.constraints[i].f.eval(x, scratch) - phi[i]);
    rep.max_hyperplane_residual =
        std::max(rep.max_hyperplane_residual, std::abs(gval - cert.bound));
  }
  return rep;
}

}  // namespace sharp
