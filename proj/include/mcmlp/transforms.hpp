#pragma once

// Orthogonal coordinate-frame changes: orthonormal DCT-II and the Walsh-Hadamard
// transform, in 1D (reference and fast) and batched 2D (differentiable) forms.

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mcmlp/error.hpp"
#include "mcmlp/tensor.hpp"

namespace mcmlp {

enum class TransformKind { Hadamard, Dct };

inline std::string to_string(TransformKind kind) {
  return kind == TransformKind::Dct ? "dct" : "hadamard";
}

constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t log2_exact(std::size_t n) {
  std::size_t k = 0;
  while ((std::size_t{1} << k) < n) ++k;
  return k;
}

inline void require_power_of_two(std::size_t n, const std::string& what) {
  if (!is_power_of_two(n)) {
    throw ValidationError(what + " = " + std::to_string(n) +
                          " is not a power of 2 (token count N and channel width C must be powers of 2)");
  }
}

// ---------------------------------------------------------------------------
// Hadamard
// ---------------------------------------------------------------------------

// Sylvester-type Hadamard matrix: H_1 = [1], H_2n = [[H_n, H_n], [H_n, -H_n]].
class HadamardMatrix {
 public:
  explicit HadamardMatrix(std::size_t order) : order_(order) {
    require_power_of_two(order, "hadamard order");
    entries_.assign(order * order, 1);
    for (std::size_t block = 1; block < order; block *= 2) {
      for (std::size_t i = 0; i < block; ++i) {
        for (std::size_t j = 0; j < block; ++j) {
          const int v = entries_[i * order + j];
          entries_[i * order + j + block] = v;
          entries_[(i + block) * order + j] = v;
          entries_[(i + block) * order + j + block] = -v;
        }
      }
    }
  }

  std::size_t order() const { return order_; }
  int operator()(std::size_t row, std::size_t col) const { return entries_[row * order_ + col]; }
  std::span<const int> entries() const { return entries_; }

 private:
  std::size_t order_;
  std::vector<int> entries_;
};

inline HadamardMatrix hadamard_matrix(std::size_t order) { return HadamardMatrix(order); }

// In-place unnormalized butterfly: x <- H_N x, additions and subtractions only.
template <typename T>
void fwht(std::span<T> x) {
  const std::size_t n = x.size();
  require_power_of_two(n, "fwht length");
  for (std::size_t h = 1; h < n; h *= 2) {
    for (std::size_t i = 0; i < n; i += 2 * h) {
      for (std::size_t j = i; j < i + h; ++j) {
        const T a = x[j];
        const T b = x[j + h];
        x[j] = a + b;
        x[j + h] = a - b;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// DCT-II
// ---------------------------------------------------------------------------

// Direct O(N^2) orthonormal DCT-II:
// F(k) = c(k) sqrt(2/N) sum_n f(n) cos(pi (2n+1) k / 2N), c(0) = 1/sqrt(2), else 1.
// The cosine of every term is looked up from cos(pi m / 2N), m = (2n+1)k mod 4N.
template <typename T>
std::vector<T> dct1d_naive(std::span<const T> x) {
  const std::size_t n = x.size();
  const std::size_t period = 4 * n;
  const long double pi = std::numbers::pi_v<long double>;
  std::vector<double> table(period);
  for (std::size_t m = 0; m < period; ++m) table[m] = static_cast<double>(std::cos(pi * m / (2.0L * n)));
  std::vector<T> out(n);
  const double norm = static_cast<double>(std::sqrt(2.0L / n));
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0;
    std::size_t m = k % period;  // (2n+1)k mod 4N, stepping by 2k
    const std::size_t step = (2 * k) % period;
    for (std::size_t i = 0; i < n; ++i) {
      acc += static_cast<double>(x[i]) * table[m];
      m += step;
      if (m >= period) m -= period;
    }
    const double ck = (k == 0) ? std::numbers::sqrt2 / 2 : 1.0;
    out[k] = static_cast<T>(ck * norm * acc);
  }
  return out;
}

// Precomputed tables for the recursive (Lee) fast DCT-II / DCT-III of one
// power-of-2 length. Immutable after construction; safe to share across threads.
template <typename T>
class DctPlan {
 public:
  explicit DctPlan(std::size_t n) : n_(n) {
    require_power_of_two(n, "dct length");
    const long double pi = std::numbers::pi_v<long double>;
    levels_.resize(log2_exact(n) + 1);
    for (std::size_t len = 2; len <= n; len *= 2) {
      auto& tab = levels_[log2_exact(len)];
      tab.resize(len / 2);
      for (std::size_t i = 0; i < len / 2; ++i) {
        tab[i] = static_cast<T>(1.0L / (2.0L * std::cos((i + 0.5L) * pi / len)));
      }
    }
    scale_dc_ = static_cast<T>(std::sqrt(1.0L / n));
    scale_ac_ = static_cast<T>(std::sqrt(2.0L / n));
  }

  std::size_t size() const { return n_; }

  // Orthonormal DCT-II, in place.
  void forward(std::span<T> x) const {
    check(x.size());
    auto& tmp = scratch();
    forward_rec(x.data(), tmp.data(), n_);
    x[0] *= scale_dc_;
    for (std::size_t k = 1; k < n_; ++k) x[k] *= scale_ac_;
  }

  // Transpose (= inverse) of the orthonormal DCT-II, i.e. orthonormal DCT-III, in place.
  void transpose(std::span<T> g) const {
    check(g.size());
    g[0] *= scale_dc_;
    for (std::size_t k = 1; k < n_; ++k) g[k] *= scale_ac_;
    auto& tmp = scratch();
    inverse_rec(g.data(), tmp.data(), n_);
  }

  // Process-wide cache of plans keyed by length.
  static const DctPlan& shared(std::size_t n) {
    static std::mutex mu;
    static std::map<std::size_t, std::unique_ptr<DctPlan>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<DctPlan>(n);
    return *slot;
  }

 private:
  void check(std::size_t len) const {
    if (len != n_) {
      throw ShapeError("dct: vector length " + std::to_string(len) + " does not match plan length " +
                       std::to_string(n_));
    }
  }

  std::vector<T>& scratch() const {
    thread_local std::vector<T> buf;
    if (buf.size() < n_) buf.resize(n_);
    return buf;
  }

  // Unnormalized X[k] = sum_n x[n] cos(pi (n + 1/2) k / len); tmp is clobbered.
  void forward_rec(T* v, T* tmp, std::size_t len) const {
    if (len == 1) return;
    const std::size_t half = len / 2;
    const T* tab = levels_[log2_exact(len)].data();
    for (std::size_t i = 0; i < half; ++i) {
      const T a = v[i];
      const T b = v[len - 1 - i];
      tmp[i] = a + b;
      tmp[i + half] = (a - b) * tab[i];
    }
    forward_rec(tmp, v, half);
    forward_rec(tmp + half, v + half, half);
    for (std::size_t i = 0; i + 1 < half; ++i) {
      v[2 * i] = tmp[i];
      v[2 * i + 1] = tmp[i + half] + tmp[i + half + 1];
    }
    v[len - 2] = tmp[half - 1];
    v[len - 1] = tmp[len - 1];
  }

  // x[n] = sum_k X[k] cos(pi (n + 1/2) k / len); tmp is clobbered.
  void inverse_rec(T* v, T* tmp, std::size_t len) const {
    if (len == 1) return;
    const std::size_t half = len / 2;
    const T* tab = levels_[log2_exact(len)].data();
    tmp[0] = v[0];
    tmp[half] = v[1];
    for (std::size_t i = 1; i < half; ++i) {
      tmp[i] = v[2 * i];
      tmp[i + half] = v[2 * i - 1] + v[2 * i + 1];
    }
    inverse_rec(tmp, v, half);
    inverse_rec(tmp + half, v + half, half);
    for (std::size_t i = 0; i < half; ++i) {
      const T a = tmp[i];
      const T b = tmp[i + half] * tab[i];
      v[i] = a + b;
      v[len - 1 - i] = a - b;
    }
  }

  std::size_t n_;
  std::vector<std::vector<T>> levels_;
  T scale_dc_;
  T scale_ac_;
};

template <typename T>
std::vector<T> dct1d_fast(const DctPlan<T>& plan, std::span<const T> x) {
  std::vector<T> out(x.begin(), x.end());
  plan.forward(out);
  return out;
}

template <typename T>
std::vector<T> dct1d_transpose(const DctPlan<T>& plan, std::span<const T> g) {
  std::vector<T> out(g.begin(), g.end());
  plan.transpose(out);
  return out;
}

// ---------------------------------------------------------------------------
// 2D transforms over row-major rows x cols slabs (rows = tokens, cols = channels)
// ---------------------------------------------------------------------------

namespace detail {

template <typename T, typename RowFn>
void for_each_column(T* slab, std::size_t rows, std::size_t cols, RowFn&& fn) {
  thread_local std::vector<T> column;
  column.resize(rows);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i) column[i] = slab[i * cols + j];
    fn(std::span<T>(column.data(), rows));
    for (std::size_t i = 0; i < rows; ++i) slab[i * cols + j] = column[i];
  }
}

// Butterflies across whole rows: applies H_rows to the column space of the slab.
template <typename T>
void fwht_columns(T* slab, std::size_t rows, std::size_t cols) {
  for (std::size_t h = 1; h < rows; h *= 2) {
    for (std::size_t i = 0; i < rows; i += 2 * h) {
      for (std::size_t r = i; r < i + h; ++r) {
        T* top = slab + r * cols;
        T* bot = slab + (r + h) * cols;
        for (std::size_t j = 0; j < cols; ++j) {
          const T a = top[j];
          const T b = bot[j];
          top[j] = a + b;
          bot[j] = a - b;
        }
      }
    }
  }
}

}  // namespace detail

// Separable orthonormal 2D DCT-II of one slab, in place: rows first, then columns.
template <typename T>
void dct2d_inplace(std::span<T> slab, std::size_t rows, std::size_t cols) {
  require_power_of_two(rows, "dct2d rows");
  require_power_of_two(cols, "dct2d cols");
  if (slab.size() != rows * cols) throw ShapeError("dct2d: slab size does not match rows x cols");
  const auto& row_plan = DctPlan<T>::shared(cols);
  const auto& col_plan = DctPlan<T>::shared(rows);
  for (std::size_t i = 0; i < rows; ++i) row_plan.forward(slab.subspan(i * cols, cols));
  detail::for_each_column(slab.data(), rows, cols, [&](std::span<T> c) { col_plan.forward(c); });
}

// Transpose of dct2d_inplace: columns first, then rows.
template <typename T>
void dct2d_transpose_inplace(std::span<T> slab, std::size_t rows, std::size_t cols) {
  require_power_of_two(rows, "dct2d rows");
  require_power_of_two(cols, "dct2d cols");
  if (slab.size() != rows * cols) throw ShapeError("dct2d: slab size does not match rows x cols");
  const auto& row_plan = DctPlan<T>::shared(cols);
  const auto& col_plan = DctPlan<T>::shared(rows);
  detail::for_each_column(slab.data(), rows, cols, [&](std::span<T> c) { col_plan.transpose(c); });
  for (std::size_t i = 0; i < rows; ++i) row_plan.transpose(slab.subspan(i * cols, cols));
}

// H_rows * X * H_cols / (rows * cols), in place.
template <typename T>
void hadamard2d_inplace(std::span<T> slab, std::size_t rows, std::size_t cols) {
  require_power_of_two(rows, "hadamard2d rows");
  require_power_of_two(cols, "hadamard2d cols");
  if (slab.size() != rows * cols) throw ShapeError("hadamard2d: slab size does not match rows x cols");
  for (std::size_t i = 0; i < rows; ++i) fwht(slab.subspan(i * cols, cols));
  detail::fwht_columns(slab.data(), rows, cols);
  const T s = T(1) / static_cast<T>(rows * cols);
  for (auto& v : slab) v *= s;
}

namespace detail {

template <typename T>
using SlabFn = void (*)(std::span<T>, std::size_t, std::size_t);

template <typename T>
Tensor<T> apply_slabwise(const Tensor<T>& x, SlabFn<T> forward, SlabFn<T> adjoint, const char* name) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw ShapeError(std::string(name) + ": expected [N, C] or [B, N, C], got " + shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(x.rank() - 2);
  const std::size_t cols = x.dim(x.rank() - 1);
  require_power_of_two(rows, std::string(name) + " token count N");
  require_power_of_two(cols, std::string(name) + " channel width C");
  const std::size_t batch = x.numel() / (rows * cols);
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::size_t s = 0; s < batch; ++s) {
    forward(std::span<T>(out.data() + s * rows * cols, rows * cols), rows, cols);
  }
  return Tensor<T>::make_result(x.shape(), std::move(out), {x},
                                [adjoint, batch, rows, cols](Node<T>& self) {
                                  std::vector<T> g = self.grad;
                                  for (std::size_t s = 0; s < batch; ++s) {
                                    adjoint(std::span<T>(g.data() + s * rows * cols, rows * cols), rows, cols);
                                  }
                                  accumulate<T>(*self.inputs[0], g);
                                });
}

}  // namespace detail

// Differentiable orthonormal 2D DCT over the trailing [N, C] axes, batched over a leading axis.
template <typename T>
Tensor<T> dct2d(const Tensor<T>& x) {
  return detail::apply_slabwise<T>(x, &dct2d_inplace<T>, &dct2d_transpose_inplace<T>, "dct2d");
}

// Differentiable H_N X H_C / (N C) over the trailing [N, C] axes. Self-adjoint since H is symmetric.
template <typename T>
Tensor<T> hadamard2d(const Tensor<T>& x) {
  return detail::apply_slabwise<T>(x, &hadamard2d_inplace<T>, &hadamard2d_inplace<T>, "hadamard2d");
}

template <typename T>
Tensor<T> transform2d(const Tensor<T>& x, TransformKind kind) {
  return kind == TransformKind::Dct ? dct2d(x) : hadamard2d(x);
}

}  // namespace mcmlp
