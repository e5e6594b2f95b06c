#include "sharp/inner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "sharp/expr.hpp"

namespace sharp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kInvGolden = 0.6180339887498949;  // 1/φ

// Direct (off-grid) evaluation of ±G; domain failures count as −inf so they
// can never win a maximization.
struct GEval {
  const ProblemSpec& p;
  std::span<const double> alpha;
  std::vector<double> phi;
  int sign;
  std::vector<double> scratch;
  std::size_t count = 0;

  double operator()(std::span<const double> x) {
    ++count;
    double v;
    try {
      v = p.objective.eval(x, scratch);
      for (std::size_t i = 0; i < p.constraints.size(); ++i) {
        if (alpha[i] == 0.0) continue;
        double fv = p.constraints[i].f.eval(x, scratch);
        if (!std::isfinite(fv)) return -kInf;
        v += alpha[i] * (fv - phi[i]);
      }
    } catch (const EvalError&) {
      return -kInf;
    }
    return sign * v;
  }
};

struct Candidate {
  std::vector<double> point;
  double value;
};

// Maximizes fn along coordinate d of x over [lo, hi] by golden-section
// search, keeping the best sample ever seen (so the result never falls below
// the starting value). Comparison ties resolve toward the left for
// determinism.
template <typename Fn>
void golden_ascent(std::vector<double>& x, int d, double lo, double hi, int evals,
                   double& best_val, Fn&& fn) {
  double best_t = x[d];
  auto probe = [&](double t) {
    x[d] = t;
    double v = fn(x);
    if (v > best_val) {
      best_val = v;
      best_t = t;
    }
    return v;
  };
  double a = lo, b = hi;
  double c = b - (b - a) * kInvGolden;
  double e = a + (b - a) * kInvGolden;
  double fc = probe(c), fe = probe(e);
  for (int i = 0; i < evals - 2; ++i) {
    if (fc >= fe) {
      b = e;
      e = c;
      fe = fc;
      c = b - (b - a) * kInvGolden;
      fc = probe(c);
    } else {
      a = c;
      c = e;
      fc = fe;
      e = a + (b - a) * kInvGolden;
      fe = probe(e);
    }
  }
  x[d] = best_t;
}

}  // namespace

InnerResult evaluate_inner(const ProblemSpec& p, const StageGrid& grid,
                           std::span<const double> alpha, int sign,
                           const InnerOptions& opts) {
  if (grid.size() == 0) throw std::invalid_argument("empty stage grid");
  if (alpha.size() != static_cast<std::size_t>(grid.m))
    throw std::invalid_argument("alpha dimension mismatch");
  if (sign != 1 && sign != -1) throw std::invalid_argument("sign must be +1 or -1");

  const std::size_t n = grid.size();
  std::vector<double> vals(n);
  auto scan = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const double* fs = grid.fshift.data() + i * grid.m;
      double dot = grid.gvals[i];
      for (int j = 0; j < grid.m; ++j) dot += alpha[j] * fs[j];
      vals[i] = sign * dot;
    }
  };
  int workers = std::max(1, opts.workers);
  if (workers == 1 || n < 4096) {
    scan(0, n);
  } else {
    std::vector<std::thread> pool;
    std::size_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      std::size_t b = std::min(n, w * chunk), e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(scan, b, e);
    }
    for (auto& t : pool) t.join();
  }

  InnerResult out;
  out.evaluations = n;

  std::size_t arg = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (vals[i] > vals[arg]) arg = i;
  double vmax = vals[arg];

  if (!std::isfinite(vmax)) {
    // Divergent (or fully degenerate) stage: report the first witness point.
    out.value = vmax;
    out.maximizers.emplace_back(grid.point(arg).begin(), grid.point(arg).end());
    out.f_image.emplace_back(grid.f(arg).begin(), grid.f(arg).end());
    return out;
  }

  double tol = opts.tol_active_scale * (1.0 + std::abs(vmax));

  // Candidates to polish: everything in the tie band plus the top few values
  // overall. The extra candidates matter when a curved interior maximum sits
  // between coarse grid points: its best grid sample can fall far outside the
  // band while still bracketing the true peak.
  std::vector<std::size_t> cand_idx;
  for (std::size_t i = 0; i < n; ++i)
    if (vals[i] >= vmax - tol) cand_idx.push_back(i);
  if (grid.refinable() && opts.refine_iters > 0 && opts.refine_candidates > 0) {
    std::vector<std::size_t> top;
    for (std::size_t i = 0; i < n; ++i) {
      top.push_back(i);
      std::push_heap(top.begin(), top.end(), [&](std::size_t a, std::size_t b) {
        return vals[a] > vals[b] || (vals[a] == vals[b] && a < b);
      });
      if (top.size() > static_cast<std::size_t>(opts.refine_candidates)) {
        std::pop_heap(top.begin(), top.end(), [&](std::size_t a, std::size_t b) {
          return vals[a] > vals[b] || (vals[a] == vals[b] && a < b);
        });
        top.pop_back();
      }
    }
    for (std::size_t i : top)
      if (vals[i] < vmax - tol) cand_idx.push_back(i);
  }
  std::sort(cand_idx.begin(), cand_idx.end());

  std::vector<Candidate> cands;
  cands.reserve(cand_idx.size());
  for (std::size_t i : cand_idx) {
    Candidate c;
    c.point.assign(grid.point(i).begin(), grid.point(i).end());
    c.value = vals[i];
    cands.push_back(std::move(c));
  }

  if (grid.refinable() && opts.refine_iters > 0) {
    GEval geval{p, alpha, grid.phi, sign, {}, 0};
    for (Candidate& c : cands) {
      for (int round = 0; round < opts.refine_iters; ++round) {
        for (int d = 0; d < grid.dim; ++d) {
          double lo, hi;
          if (!grid.bracket(c.point, d, lo, hi) || hi - lo <= 0.0) continue;
          golden_ascent(c.point, d, lo, hi, opts.golden_evals, c.value, geval);
        }
      }
    }
    out.evaluations += geval.count;
  }

  double value = vmax;
  for (const Candidate& c : cands) value = std::max(value, c.value);
  tol = opts.tol_active_scale * (1.0 + std::abs(value));

  std::vector<const Candidate*> keep;
  for (const Candidate& c : cands)
    if (c.value >= value - tol) keep.push_back(&c);
  std::sort(keep.begin(), keep.end(), [](const Candidate* a, const Candidate* b) {
    return a->point < b->point;
  });
  keep.erase(std::unique(keep.begin(), keep.end(),
                         [](const Candidate* a, const Candidate* b) {
                           return a->point == b->point;
                         }),
             keep.end());

  out.value = value;
  std::vector<double> scratch;
  for (const Candidate* c : keep) {
    std::vector<double> fi(grid.m);
    bool ok = true;
    try {
      for (int j = 0; j < grid.m; ++j) {
        double fv = p.constraints[j].f.eval(c->point, scratch);
        if (!std::isfinite(fv)) {
          ok = false;
          break;
        }
        fi[j] = fv - grid.phi[j];
      }
    } catch (const EvalError&) {
      ok = false;
    }
    if (!ok) continue;
    out.maximizers.push_back(c->point);
    out.f_image.push_back(std::move(fi));
  }
  if (out.maximizers.empty())
    throw std::runtime_error("no evaluable maximizer at the inner optimum");
  return out;
}

InnerResult evaluate_inner(const ProblemSpec& p, std::span<const double> alpha,
                           int sign, int grid_res, int refine_iters) {
  SupportSet stage =
      p.support.schedule
          ? truncation_stage(p.support, p.support.schedule->max_stages - 1)
          : truncation_stage(p.support, 0);
  StageGrid grid = build_grid(p, stage, grid_res, GridScale::Uniform);
  InnerOptions opts;
  opts.refine_iters = refine_iters;
  return evaluate_inner(p, grid, alpha, sign, opts);
}

std::vector<double> subgradient_from(const InnerResult& result, int sign) {
  if (result.f_image.empty())
    throw std::logic_error("subgradient requires at least one maximizer");
  std::vector<double> s = result.f_image.front();
  for (double& v : s) v *= sign;
  return s;
}

}  // namespace sharp
