#include "sharp/linalg.hpp"

#include <cmath>
#include <random>

#include "doctest.h"
#include "sharp/simplex.hpp"

using namespace sharp;

namespace {
double uniform(std::mt19937_64& rng, double lo, double hi) {
  double u = (rng() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}
}  // namespace

TEST_CASE("square solve recovers a known solution and detects singularity") {
  Mat a(2, 2);
  a(0, 0) = 2;
  a(0, 1) = 1;
  a(1, 0) = 1;
  a(1, 1) = 3;
  std::vector<double> x;
  REQUIRE(solve_square(a, {5, 10}, x));
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(x[1] == doctest::Approx(3.0).epsilon(1e-14));

  Mat s(2, 2);
  s(0, 0) = 1;
  s(0, 1) = 2;
  s(1, 0) = 2;
  s(1, 1) = 4;
  CHECK_FALSE(solve_square(s, {1, 1}, x));
}

TEST_CASE("least squares matches the normal equations on random tall systems") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    int m = 6, n = 3;
    Mat a(m, n);
    std::vector<double> xtrue(n), b(m);
    for (int j = 0; j < n; ++j) xtrue[j] = uniform(rng, -2, 2);
    for (int i = 0; i < m; ++i) {
      b[i] = 0.0;
      for (int j = 0; j < n; ++j) {
        a(i, j) = uniform(rng, -1, 1);
        b[i] += a(i, j) * xtrue[j];
      }
    }
    std::vector<double> x = lstsq(a, b);
    REQUIRE(x.size() == static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) CHECK(x[j] == doctest::Approx(xtrue[j]).epsilon(1e-10));
    CHECK(residual_inf(a, x, b) < 1e-10);
  }
}

TEST_CASE("least squares handles rank deficiency without blowing up") {
  Mat a(3, 2);
  a(0, 0) = 1;
  a(0, 1) = 2;
  a(1, 0) = 2;
  a(1, 1) = 4;
  a(2, 0) = 3;
  a(2, 1) = 6;
  std::vector<double> x = lstsq(a, {1, 2, 3});
  // Any least-squares solution has zero residual here.
  CHECK(residual_inf(a, x, {1, 2, 3}) < 1e-12);
  for (double v : x) CHECK(std::isfinite(v));
}

TEST_CASE("nnls reproduces nonnegative ground truth and clamps at zero") {
  Mat a(3, 2);
  a(0, 0) = 1;
  a(0, 1) = 0;
  a(1, 0) = 0;
  a(1, 1) = 1;
  a(2, 0) = 1;
  a(2, 1) = 1;
  std::vector<double> x = nnls(a, {1, 2, 3});
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(x[1] == doctest::Approx(2.0).epsilon(1e-12));

  // Unconstrained optimum has a negative coordinate; NNLS must pin it to 0.
  Mat c(2, 2);
  c(0, 0) = 1;
  c(0, 1) = 1;
  c(1, 0) = 0;
  c(1, 1) = 1;
  std::vector<double> y = nnls(c, {-1, 2});
  CHECK(y[0] == 0.0);
  CHECK(y[1] >= 0.0);
}

TEST_CASE("nnls solves random consistent systems with nonnegative solutions") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 25; ++trial) {
    int m = 5, n = 4;
    Mat a(m, n);
    std::vector<double> xtrue(n), b(m, 0.0);
    for (int j = 0; j < n; ++j) xtrue[j] = uniform(rng, 0, 3);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        a(i, j) = uniform(rng, 0, 1);
        b[i] += a(i, j) * xtrue[j];
      }
    std::vector<double> x = nnls(a, b);
    for (double v : x) CHECK(v >= 0.0);
    CHECK(residual_inf(a, x, b) < 1e-8);
  }
}

TEST_CASE("simplex solves a textbook LP at a vertex") {
  // min -x1 - 2 x2  s.t.  x1 + x2 + s1 = 4,  x1 + 3 x2 + s2 = 6,  x >= 0.
  Mat a(2, 4);
  a(0, 0) = 1;
  a(0, 1) = 1;
  a(0, 2) = 1;
  a(1, 0) = 1;
  a(1, 1) = 3;
  a(1, 3) = 1;
  LpResult r = solve_lp(a, {4, 6}, {-1, -2, 0, 0});
  REQUIRE(r.status == LpStatus::Optimal);
  CHECK(r.x[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.objective == doctest::Approx(-5.0).epsilon(1e-12));
}

TEST_CASE("simplex handles equality-only moment systems") {
  // Weights on {0, 1, 4} with mean 2: minimize weight at 0.
  Mat a(2, 3);
  a(0, 0) = 0;
  a(0, 1) = 1;
  a(0, 2) = 4;
  a(1, 0) = 1;
  a(1, 1) = 1;
  a(1, 2) = 1;
  LpResult r = solve_lp(a, {2, 1}, {1, 0, 0});
  REQUIRE(r.status == LpStatus::Optimal);
  CHECK(r.objective == doctest::Approx(0.0));
  CHECK(r.x[1] == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(r.x[2] == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("simplex reports unboundedness") {
  // min -x1 s.t. x1 - x2 = 0: push both to infinity.
  Mat a(1, 2);
  a(0, 0) = 1;
  a(0, 1) = -1;
  LpResult r = solve_lp(a, {0}, {-1, 0});
  CHECK(r.status == LpStatus::Unbounded);
}

TEST_CASE("infeasible LPs come with a certificate of infeasibility") {
  // x1 + x2 = 1, x1 + x2 = 3 cannot both hold.
  Mat a(2, 2);
  a(0, 0) = 1;
  a(0, 1) = 1;
  a(1, 0) = 1;
  a(1, 1) = 1;
  LpResult r = solve_lp(a, {1, 3}, {0, 0});
  REQUIRE(r.status == LpStatus::Infeasible);
  REQUIRE(r.farkas.size() == 2);
  // y'A <= 0 componentwise and y'b > 0 certify that no x >= 0 works.
  for (int j = 0; j < 2; ++j) {
    double dot = r.farkas[0] * a(0, j) + r.farkas[1] * a(1, j);
    CHECK(dot <= 1e-9);
  }
  CHECK(r.farkas[0] * 1 + r.farkas[1] * 3 > 1e-9);
}

TEST_CASE("moment infeasibility yields a certificate too") {
  // Weights on {0, 1} cannot have mean 2.
  Mat a(2, 2);
  a(0, 0) = 0;
  a(0, 1) = 1;
  a(1, 0) = 1;
  a(1, 1) = 1;
  LpResult r = solve_lp(a, {2, 1}, {0, 0});
  REQUIRE(r.status == LpStatus::Infeasible);
  for (int j = 0; j < 2; ++j)
    CHECK(r.farkas[0] * a(0, j) + r.farkas[1] * a(1, j) <= 1e-9);
  CHECK(r.farkas[0] * 2 + r.farkas[1] * 1 > 1e-9);
}

TEST_CASE("redundant equality rows do not break the solve") {
  Mat a(3, 3);
  // Row 2 duplicates row 0.
  a(0, 0) = 1;
  a(0, 1) = 1;
  a(0, 2) = 0;
  a(1, 0) = 0;
  a(1, 1) = 1;
  a(1, 2) = 1;
  a(2, 0) = 1;
  a(2, 1) = 1;
  a(2, 2) = 0;
  LpResult r = solve_lp(a, {1, 1, 1}, {1, 2, 3});
  REQUIRE(r.status == LpStatus::Optimal);
  CHECK(r.x[0] + r.x[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.x[1] + r.x[2] == doctest::Approx(1.0).epsilon(1e-12));
  // The cheapest consistent vertex is x = (0, 1, 0).
  CHECK(r.objective == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("negative right-hand sides are handled by row scaling") {
  Mat a(1, 2);
  a(0, 0) = -1;
  a(0, 1) = -2;
  LpResult r = solve_lp(a, {-2}, {1, 1});
  REQUIRE(r.status == LpStatus::Optimal);
  CHECK(r.objective == doctest::Approx(1.0).epsilon(1e-12));  // x = (0, 1)
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("degenerate vertices terminate under the anti-cycling rule") {
  // A classically degenerate system: multiple bases describe the same vertex.
  Mat a(3, 7);
  double rows[3][7] = {{0.25, -60, -0.04, 9, 1, 0, 0},
                       {0.5, -90, -0.02, 3, 0, 1, 0},
                       {0, 0, 1, 0, 0, 0, 1}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 7; ++j) a(i, j) = rows[i][j];
  LpResult r = solve_lp(a, {0, 0, 1}, {-0.75, 150, -0.02, 6, 0, 0, 0});
  REQUIRE(r.status == LpStatus::Optimal);
  CHECK(r.objective == doctest::Approx(-0.05).epsilon(1e-9));
  CHECK(r.x[0] == doctest::Approx(0.04).epsilon(1e-9));
}
