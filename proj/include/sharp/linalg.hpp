#pragma once

#include <cstddef>
#include <vector>

namespace sharp {

// Dense row-major matrix, just big enough for the (m+1)-row moment systems.
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

// Gaussian elimination with partial pivoting; false if numerically singular.
bool solve_square(Mat A, std::vector<double> b, std::vector<double>& x);

// Least squares min ||Ax - b|| via column-pivoted Householder QR.
// Rank-deficient columns get x = 0. Returns the solution; any-rank A.
// If rank_out is non-null it receives the numerical rank.
std::vector<double> lstsq(const Mat& A, const std::vector<double>& b,
                          int* rank_out = nullptr);

// max_i |(Ax - b)_i|
double residual_inf(const Mat& A, const std::vector<double>& x,
                    const std::vector<double>& b);

// Lawson-Hanson nonnegative least squares: min ||Ax - b|| s.t. x >= 0.
// Deterministic (lowest-index tie-breaking). Returns the solution.
std::vector<double> nnls(const Mat& A, const std::vector<double>& b);

}  // namespace sharp
