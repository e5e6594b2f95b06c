#include "sharp/closed_forms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace sharp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double eval1(const Expr& g, double x, std::vector<double>& scratch) {
  return g.eval(std::span<const double>(&x, 1), scratch);
}

}  // namespace

VarianceRange variance_range(double a, double b, double lambda) {
  if (!(a < lambda && lambda < b))
    throw std::domain_error("variance_range requires a < lambda < b");
  return {0.0, (b - lambda) * (lambda - a)};
}

JensenGapBounds jensen_gap_bounds(const Expr& g, double a, double b, double lambda,
                                  double sigma2) {
  if (!(a < lambda && lambda < b))
    throw std::domain_error("jensen_gap_bounds requires a < lambda < b");
  double vmax = (b - lambda) * (lambda - a);
  if (!(sigma2 > 0.0) || sigma2 > vmax)
    throw std::domain_error("sigma2 must lie in (0, (b-lambda)(lambda-a)]");

  JensenGapBounds out;
  std::vector<double> scratch;

  // Lower witness: mass at the left endpoint plus one interior atom placed so
  // that the pair matches both moments.
  {
    double d = lambda - a;
    double c = lambda + sigma2 / d;
    double wa = sigma2 / (sigma2 + d * d);
    double wc = d * d / (sigma2 + d * d);
    out.mu_lower.atoms = {{a}, {c}};
    out.mu_lower.weights = {wa, wc};
    out.lower = wa * eval1(g, a, scratch) + wc * eval1(g, c, scratch);
  }
  // Upper witness mirrors through the right endpoint.
  {
    double d = lambda - b;
    double c = lambda + sigma2 / d;
    double wb = sigma2 / (sigma2 + d * d);
    double wc = d * d / (sigma2 + d * d);
    out.mu_upper.atoms = {{b}, {c}};
    out.mu_upper.weights = {wb, wc};
    out.upper = wb * eval1(g, b, scratch) + wc * eval1(g, c, scratch);
  }
  return out;
}

MgfBounds mgf_bounds(double lambda, double sigma2, double s) {
  if (!(lambda > 0.0) || !(sigma2 > 0.0))
    throw std::domain_error("mgf_bounds requires lambda > 0 and sigma2 > 0");
  if (s == 0.0) throw std::domain_error("mgf_bounds requires s != 0");
  double l2 = lambda * lambda;
  double pinned = (sigma2 + l2 * std::exp((l2 + sigma2) * s / lambda)) / (sigma2 + l2);
  if (s > 0.0) return {pinned, kInf};
  return {std::exp(lambda * s), pinned};
}

PowerMeanBounds power_mean_bounds(double lambda, double sigma2, double s) {
  if (!(lambda > 0.0) || !(sigma2 > 0.0))
    throw std::domain_error("power_mean_bounds requires lambda > 0 and sigma2 > 0");
  if (s == 0.0) throw std::domain_error("power_mean_bounds requires s != 0");
  if (s == 1.0) return {lambda, lambda};
  if (s == 2.0) {
    double m2 = std::sqrt(lambda * lambda + sigma2);
    return {m2, m2};
  }
  double band = std::pow(sigma2 + lambda * lambda, 1.0 - 1.0 / s) /
                std::pow(lambda, 1.0 - 2.0 / s);
  if (s < 0.0) return {0.0, lambda};
  if (s < 1.0) return {band, lambda};
  if (s < 2.0) return {lambda, band};
  return {band, std::nullopt};
}

ThreePointAtoms three_point_atoms(const ThreePointParam& tp) {
  double sab = std::sqrt(tp.pa + tp.pb);
  double st = std::sin(tp.theta), ct = std::cos(tp.theta);
  ThreePointAtoms x;
  x.xa = tp.lambda +
         tp.sigma * (ct * std::sqrt(tp.pb / tp.pa) + st * std::sqrt(tp.pc)) / sab;
  x.xb = tp.lambda +
         tp.sigma * (-ct * std::sqrt(tp.pa / tp.pb) + st * std::sqrt(tp.pc)) / sab;
  x.xc = tp.lambda - tp.sigma * st * std::sqrt((tp.pa + tp.pb) / tp.pc);
  return x;
}

double three_point_extremize(const Expr& g, double lambda, double sigma2,
                             Direction direction, const ThreePointOptions& opts) {
  if (!(sigma2 > 0.0)) throw std::domain_error("three_point_extremize requires sigma2 > 0");
  if (opts.multistarts < 1 || opts.sweeps < 1)
    throw std::invalid_argument("multistarts and sweeps must be positive");
  const double sigma = std::sqrt(sigma2);
  const double dsign = direction == Direction::Lower ? 1.0 : -1.0;

  std::vector<double> scratch;
  // zs: softmax logits for the weights; z[3] is θ. Objective in minimization
  // form regardless of the requested direction.
  auto objective = [&](const double z[4]) {
    double e0 = std::exp(z[0] - std::max({z[0], z[1], z[2]}));
    double e1 = std::exp(z[1] - std::max({z[0], z[1], z[2]}));
    double e2 = std::exp(z[2] - std::max({z[0], z[1], z[2]}));
    double tot = e0 + e1 + e2;
    ThreePointParam tp;
    tp.pa = e0 / tot;
    tp.pb = e1 / tot;
    tp.pc = e2 / tot;
    tp.theta = z[3];
    tp.lambda = lambda;
    tp.sigma = sigma;
    ThreePointAtoms x = three_point_atoms(tp);
    double v;
    try {
      v = tp.pa * eval1(g, x.xa, scratch) + tp.pb * eval1(g, x.xb, scratch) +
          tp.pc * eval1(g, x.xc, scratch);
    } catch (const EvalError&) {
      return kInf;
    }
    if (!std::isfinite(v)) return kInf;
    return dsign * v;
  };

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> zdist(-2.0, 2.0);
  std::uniform_real_distribution<double> tdist(0.0, 2.0 * std::acos(-1.0));

  const double inv = 0.6180339887498949;
  double best = kInf;
  for (int start = 0; start < opts.multistarts; ++start) {
    double z[4] = {zdist(rng), zdist(rng), zdist(rng), tdist(rng)};
    double cur = objective(z);
    double wz = 2.0, wt = std::acos(-1.0);
    for (int sweep = 0; sweep < opts.sweeps; ++sweep) {
      for (int d = 0; d < 4; ++d) {
        double w = d < 3 ? wz : wt;
        double lo = z[d] - w, hi = z[d] + w;
        double base = z[d];
        double bt = base, bv = cur;
        double x1 = hi - (hi - lo) * inv, x2 = lo + (hi - lo) * inv;
        auto probe = [&](double t) {
          z[d] = t;
          double v = objective(z);
          if (v < bv) {
            bv = v;
            bt = t;
          }
          return v;
        };
        double f1 = probe(x1), f2 = probe(x2);
        for (int it = 0; it < 18; ++it) {
          if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - (hi - lo) * inv;
            f1 = probe(x1);
          } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + (hi - lo) * inv;
            f2 = probe(x2);
          }
        }
        z[d] = bt;
        cur = bv;
      }
      wz *= 0.85;
      wt *= 0.85;
    }
    if (cur < best) best = cur;  // strict: earlier starts win ties
  }
  if (!std::isfinite(best))
    throw std::runtime_error("three-point search found no finite value");
  return dsign * best;
}

double markov_bound(double lambda, double a) {
  if (!(lambda > 0.0) || !(a > 0.0))
    throw std::domain_error("markov_bound requires lambda > 0 and a > 0");
  return std::max(1.0 - lambda / a, 0.0);
}

double jarzynski_bound(double a, double lambda) {
  if (!(a < 0.0) || !(lambda > a))
    throw std::domain_error("jarzynski_bound requires a < 0 and lambda > a");
  double ea = std::exp(a);
  return std::min(1.0, (1.0 - ea) / (std::exp(lambda) - ea));
}

}  // namespace sharp
