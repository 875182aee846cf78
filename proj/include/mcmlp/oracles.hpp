#pragma once

// Slow reference evaluations of the transforms, written straight from their
// defining sums and matrix products. Used by check-transforms and the tests;
// nothing here touches the fast paths.

#include <bit>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "mcmlp/transforms.hpp"

namespace mcmlp::oracle {

// Row-major N x N orthonormal DCT-II matrix, D[k][n].
inline std::vector<double> dct_matrix(std::size_t n) {
  std::vector<double> d(n * n);
  const long double pi = std::numbers::pi_v<long double>;
  for (std::size_t k = 0; k < n; ++k) {
    const long double ck = (k == 0) ? std::sqrt(1.0L / n) : std::sqrt(2.0L / n);
    for (std::size_t i = 0; i < n; ++i) {
      d[k * n + i] = static_cast<double>(ck * std::cos(pi * (2.0L * i + 1.0L) * k / (2.0L * n)));
    }
  }
  return d;
}

// Direct double sum F(u,v) = c(u) c(v) sum_i sum_j f(i,j) cos[(i+1/2) pi u / R] cos[(j+1/2) pi v / C].
inline std::vector<double> dct2d_direct(std::span<const double> x, std::size_t rows, std::size_t cols) {
  const long double pi = std::numbers::pi_v<long double>;
  std::vector<long double> cr(rows * rows), cc(cols * cols);
  for (std::size_t u = 0; u < rows; ++u)
    for (std::size_t i = 0; i < rows; ++i) cr[u * rows + i] = std::cos((i + 0.5L) * pi * u / rows);
  for (std::size_t v = 0; v < cols; ++v)
    for (std::size_t j = 0; j < cols; ++j) cc[v * cols + j] = std::cos((j + 0.5L) * pi * v / cols);
  std::vector<double> out(rows * cols);
  for (std::size_t u = 0; u < rows; ++u) {
    const long double cu = (u == 0) ? std::sqrt(1.0L / rows) : std::sqrt(2.0L / rows);
    for (std::size_t v = 0; v < cols; ++v) {
      const long double cv = (v == 0) ? std::sqrt(1.0L / cols) : std::sqrt(2.0L / cols);
      long double acc = 0;
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) acc += x[i * cols + j] * cr[u * rows + i] * cc[v * cols + j];
      out[u * cols + v] = static_cast<double>(cu * cv * acc);
    }
  }
  return out;
}

// Row-major (rows x k) * (k x cols).
inline std::vector<double> matmul(std::span<const double> a, std::span<const double> b, std::size_t rows,
                                  std::size_t k, std::size_t cols) {
  std::vector<double> out(rows * cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += av * b[p * cols + j];
    }
  return out;
}

inline std::vector<double> transpose(std::span<const double> a, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = a[i * cols + j];
  return out;
}

// D_R X D_C^T with dense DCT matrices.
inline std::vector<double> dct2d_dense(std::span<const double> x, std::size_t rows, std::size_t cols) {
  const auto dr = dct_matrix(rows);
  const auto dc = dct_matrix(cols);
  const auto left = matmul(dr, x, rows, rows, cols);
  return matmul(left, transpose(dc, cols, cols), rows, cols, cols);
}

// Dense H_N x.
inline std::vector<double> hadamard_apply(const HadamardMatrix& h, std::span<const double> x) {
  const std::size_t n = h.order();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < n; ++j) acc += h(i, j) * x[j];
    out[i] = acc;
  }
  return out;
}

// O(N^2) H_N x without materializing H: H[i][j] = (-1)^popcount(i & j).
inline std::vector<double> hadamard_apply_direct(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < n; ++j) acc += (std::popcount(i & j) & 1) ? -x[j] : x[j];
    out[i] = acc;
  }
  return out;
}

// Dense H_R X H_C / (R C).
inline std::vector<double> hadamard2d_dense(std::span<const double> x, std::size_t rows, std::size_t cols) {
  const HadamardMatrix hr(rows), hc(cols);
  std::vector<double> hr_d(hr.entries().begin(), hr.entries().end());
  std::vector<double> hc_d(hc.entries().begin(), hc.entries().end());
  auto out = matmul(matmul(hr_d, x, rows, rows, cols), hc_d, rows, cols, cols);
  const double s = 1.0 / static_cast<double>(rows * cols);
  for (auto& v : out) v *= s;
  return out;
}

}  // namespace mcmlp::oracle
