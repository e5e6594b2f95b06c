#include "sharp/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sharp {

bool solve_square(Mat A, std::vector<double> b, std::vector<double>& x) {
  std::size_t n = A.rows;
  double scale = 0.0;
  for (double v : A.a) scale = std::max(scale, std::abs(v));
  double tol = 1e-12 * std::max(scale, 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(A(i, k)) > std::abs(A(piv, k))) piv = i;
    if (std::abs(A(piv, k)) <= tol) return false;
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(A(k, j), A(piv, j));
      std::swap(b[k], b[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      double f = A(i, k) / A(k, k);
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) A(i, j) -= f * A(k, j);
      b[i] -= f * b[k];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= A(i, j) * x[j];
    x[i] = s / A(i, i);
  }
  return true;
}

std::vector<double> lstsq(const Mat& A0, const std::vector<double>& b0,
                          int* rank_out) {
  Mat A = A0;
  std::vector<double> b = b0;
  std::size_t m = A.rows, n = A.cols;
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < n; ++j) perm[j] = j;
  std::vector<double> colnorm(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += A(i, j) * A(i, j);
    colnorm[j] = s;
  }
  std::size_t steps = std::min(m, n);
  std::size_t rank = steps;
  for (std::size_t k = 0; k < steps; ++k) {
    std::size_t best = k;
    for (std::size_t j = k + 1; j < n; ++j)
      if (colnorm[j] > colnorm[best]) best = j;
    if (best != k) {
      for (std::size_t i = 0; i < m; ++i) std::swap(A(i, k), A(i, best));
      std::swap(colnorm[k], colnorm[best]);
      std::swap(perm[k], perm[best]);
    }
    double norm = 0.0;
    for (std::size_t i = k; i < m; ++i) norm += A(i, k) * A(i, k);
    norm = std::sqrt(norm);
    if (norm <= 1e-13 * std::sqrt(std::max(colnorm[0], 1.0))) {
      rank = k;
      break;
    }
    double alpha = A(k, k) >= 0 ? -norm : norm;
    // Householder vector v = x - alpha*e_k kept in-place below row k.
    double vk = A(k, k) - alpha;
    std::vector<double> v(m - k);
    v[0] = vk;
    for (std::size_t i = k + 1; i < m; ++i) v[i - k] = A(i, k);
    double vtv = 0.0;
    for (double t : v) vtv += t * t;
    if (vtv > 0) {
      for (std::size_t j = k; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = k; i < m; ++i) s += v[i - k] * A(i, j);
        double f = 2.0 * s / vtv;
        for (std::size_t i = k; i < m; ++i) A(i, j) -= f * v[i - k];
      }
      double s = 0.0;
      for (std::size_t i = k; i < m; ++i) s += v[i - k] * b[i];
      double f = 2.0 * s / vtv;
      for (std::size_t i = k; i < m; ++i) b[i] -= f * v[i - k];
    }
    A(k, k) = alpha;
    for (std::size_t j = k + 1; j < n; ++j)
      colnorm[j] = std::max(colnorm[j] - A(k, j) * A(k, j), 0.0);
  }
  std::vector<double> y(n, 0.0);
  for (std::size_t i = rank; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < rank; ++j) s -= A(i, j) * y[j];
    y[i] = s / A(i, i);
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) x[perm[j]] = y[j];
  if (rank_out) *rank_out = static_cast<int>(rank);
  return x;
}

double residual_inf(const Mat& A, const std::vector<double>& x,
                    const std::vector<double>& b) {
  double r = 0.0;
  for (std::size_t i = 0; i < A.rows; ++i) {
    double s = -b[i];
    for (std::size_t j = 0; j < A.cols; ++j) s += A(i, j) * x[j];
    r = std::max(r, std::abs(s));
  }
  return r;
}

std::vector<double> nnls(const Mat& A, const std::vector<double>& b) {
  std::size_t m = A.rows, n = A.cols;
  std::vector<char> passive(n, 0);
  std::vector<double> x(n, 0.0);

  auto gradient = [&](const std::vector<double>& xx) {
    // w = A^T (b - A xx)
    std::vector<double> r(m);
    for (std::size_t i = 0; i < m; ++i) {
      double s = b[i];
      for (std::size_t j = 0; j < n; ++j) s -= A(i, j) * xx[j];
      r[i] = s;
    }
    std::vector<double> w(n);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += A(i, j) * r[i];
      w[j] = s;
    }
    return w;
  };

  auto solve_passive = [&]() {
    // Least squares restricted to passive columns; zeros elsewhere.
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < n; ++j)
      if (passive[j]) idx.push_back(j);
    std::vector<double> z(n, 0.0);
    if (idx.empty()) return z;
    Mat Ap(m, idx.size());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < idx.size(); ++j) Ap(i, j) = A(i, idx[j]);
    std::vector<double> zp = lstsq(Ap, b);
    for (std::size_t j = 0; j < idx.size(); ++j) z[idx[j]] = zp[j];
    return z;
  };

  double scale = 0.0;
  for (double v : A.a) scale = std::max(scale, std::abs(v));
  for (double v : b) scale = std::max(scale, std::abs(v));
  double wtol = 1e-12 * std::max(scale, 1.0);

  std::size_t guard = 6 * n * std::max<std::size_t>(m, 1) + 32;
  while (guard-- > 0) {
    std::vector<double> w = gradient(x);
    std::size_t enter = n;
    double bestw = wtol;
    for (std::size_t j = 0; j < n; ++j)
      if (!passive[j] && w[j] > bestw) {  // strict >: lowest index wins ties
        bestw = w[j];
        enter = j;
      }
    if (enter == n) break;
    passive[enter] = 1;

    while (true) {
      std::vector<double> z = solve_passive();
      double worst = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (passive[j] && z[j] < worst) worst = z[j];
      if (worst >= -1e-12) {
        x = z;
        break;
      }
      // Step toward z until the first passive coordinate hits zero.
      double alpha = 1.0;
      std::size_t drop = n;
      for (std::size_t j = 0; j < n; ++j)
        if (passive[j] && z[j] <= 1e-12) {
          double denom = x[j] - z[j];
          if (denom > 0) {
            double a = x[j] / denom;
            if (a < alpha - 1e-15) {
              alpha = a;
              drop = j;
            }
          }
        }
      for (std::size_t j = 0; j < n; ++j)
        if (passive[j]) x[j] = x[j] + alpha * (z[j] - x[j]);
      if (drop != n) {
        x[drop] = 0.0;
        passive[drop] = 0;
      } else {
        for (std::size_t j = 0; j < n; ++j)
          if (passive[j] && x[j] <= 1e-12) passive[j] = 0;
      }
      if (guard-- == 0) break;
    }
  }
  for (double& v : x)
    if (v < 0) v = 0.0;
  return x;
}

}  // namespace sharp
