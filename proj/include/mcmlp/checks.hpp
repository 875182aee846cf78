#pragma once

// Self-check suites shared by `mcmlp check-transforms` and the acceptance tests:
// fast transforms against dense/direct oracles, structural identities, and
// autograd against central finite differences.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mcmlp/model.hpp"
#include "mcmlp/oracles.hpp"
#include "mcmlp/tensor.hpp"
#include "mcmlp/transforms.hpp"

namespace mcmlp {

struct CheckLine {
  std::string name;
  double value = 0;      // measured error
  double tolerance = 0;  // pass iff value <= tolerance
  bool pass() const { return value <= tolerance; }
};

struct CheckReport {
  std::vector<CheckLine> lines;
  bool all_pass() const {
    return std::all_of(lines.begin(), lines.end(), [](const CheckLine& l) { return l.pass(); });
  }
  void append(const CheckReport& other) { lines.insert(lines.end(), other.lines.begin(), other.lines.end()); }
};

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * detail::unit_uniform(rng);
  return v;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double l2_norm(std::span<const double> a) {
  double s = 0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

// Fast paths vs oracles: 1D sizes from `sizes`, 2D over every power-of-2 pair up to max_2d.
inline CheckReport transform_oracle_checks(const std::vector<std::size_t>& sizes, std::size_t max_2d, std::size_t trials,
                                           std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  double dct_err = 0, naive_err = 0, fwht_err = 0, dct2_err = 0, had2_err = 0;
  for (auto n : sizes) {
    const auto d = oracle::dct_matrix(n);
    const HadamardMatrix h(n);
    const auto& plan = DctPlan<double>::shared(n);
    for (std::size_t t = 0; t < trials; ++t) {
      auto x = random_vector(n, rng);
      const auto expect = oracle::matmul(d, x, n, n, 1);
      dct_err = std::max(dct_err, max_abs_diff(dct1d_fast<double>(plan, x), expect));
      if (t < 4) naive_err = std::max(naive_err, max_abs_diff(dct1d_naive<double>(x), expect));
      auto y = x;
      fwht<double>(y);
      fwht_err = std::max(fwht_err, max_abs_diff(y, oracle::hadamard_apply(h, x)));
    }
  }
  for (std::size_t r = 2; r <= max_2d; r *= 2) {
    for (std::size_t c = 2; c <= max_2d; c *= 2) {
      for (std::size_t t = 0; t < trials; ++t) {
        auto x = random_vector(r * c, rng);
        auto y = x;
        dct2d_inplace<double>(y, r, c);
        dct2_err = std::max(dct2_err, max_abs_diff(y, oracle::dct2d_dense(x, r, c)));
        y = x;
        hadamard2d_inplace<double>(y, r, c);
        had2_err = std::max(had2_err, max_abs_diff(y, oracle::hadamard2d_dense(x, r, c)));
      }
    }
  }
  return {{{"dct1d fast vs direct sum (max abs)", dct_err, 1e-9},
           {"dct1d naive vs dense matrix (max abs)", naive_err, 1e-9},
           {"fwht vs dense Sylvester product (max abs)", fwht_err, 1e-9},
           {"dct2d vs dense D X D^T (max abs)", dct2_err, 1e-9},
           {"hadamard2d vs dense H X H/(NC) (max abs)", had2_err, 1e-9}}};
}

inline CheckReport structural_checks(const std::vector<std::size_t>& sizes, std::size_t trials, std::uint64_t seed = 2) {
  std::mt19937_64 rng(seed);
  double norm_err = 0, inverse_err = 0, involution_err = 0, lin_dct = 0, lin_fwht = 0;
  for (auto n : sizes) {
    const auto& plan = DctPlan<double>::shared(n);
    for (std::size_t t = 0; t < trials; ++t) {
      const auto x = random_vector(n, rng);
      const auto fx = dct1d_fast<double>(plan, x);
      norm_err = std::max(norm_err, std::abs(l2_norm(fx) - l2_norm(x)));
      inverse_err = std::max(inverse_err, max_abs_diff(dct1d_transpose<double>(plan, fx), x));

      std::vector<double> ints(n);
      for (auto& v : ints) v = std::floor(detail::unit_uniform(rng) * 2001.0) - 1000.0;
      auto twice = ints;
      fwht<double>(twice);
      fwht<double>(twice);
      for (std::size_t i = 0; i < n; ++i) involution_err = std::max(involution_err, std::abs(twice[i] - double(n) * ints[i]));

      if (t < 8) {
        const auto y = random_vector(n, rng);
        const double a = 2.0 * detail::unit_uniform(rng) - 1.0, b = 2.0 * detail::unit_uniform(rng) - 1.0;
        std::vector<double> combo(n);
        for (std::size_t i = 0; i < n; ++i) combo[i] = a * x[i] + b * y[i];
        const auto fy = dct1d_fast<double>(plan, y);
        const auto fc = dct1d_fast<double>(plan, combo);
        auto hx = x, hy = y, hc = combo;
        fwht<double>(hx);
        fwht<double>(hy);
        fwht<double>(hc);
        for (std::size_t i = 0; i < n; ++i) {
          lin_dct = std::max(lin_dct, std::abs(fc[i] - (a * fx[i] + b * fy[i])));
          lin_fwht = std::max(lin_fwht, std::abs(hc[i] - (a * hx[i] + b * hy[i])));
        }
      }
    }
  }
  std::vector<double> ones(16, 1.0);
  hadamard2d_inplace<double>(ones, 4, 4);
  double e00_err = std::abs(ones[0] - 1.0);
  for (std::size_t i = 1; i < 16; ++i) e00_err = std::max(e00_err, std::abs(ones[i]));
  const HadamardMatrix h2(2);
  const double h2_err = (h2(0, 0) == 1 && h2(0, 1) == 1 && h2(1, 0) == 1 && h2(1, 1) == -1) ? 0.0 : 1.0;
  return {{{"|dct1d(x)|_2 - |x|_2 (max abs)", norm_err, 1e-9},
           {"dct1d_transpose(dct1d(x)) - x (max abs)", inverse_err, 1e-9},
           {"fwht(fwht(x)) - N x on integers (exact)", involution_err, 0.0},
           {"hadamard2d(ones 4x4) - E00 (exact)", e00_err, 0.0},
           {"hadamard_matrix(2) - [[1,1],[1,-1]] (exact)", h2_err, 0.0},
           {"dct1d linearity (max abs)", lin_dct, 1e-9},
           {"fwht linearity (max abs)", lin_fwht, 1e-9}}};
}

// ---------------------------------------------------------------------------
// Gradient checks
// ---------------------------------------------------------------------------

// |a - n| / max(|a|, |n|, floor): relative error with a floor so that coordinates whose
// true gradient is (structurally) zero are judged on an absolute scale.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t coordinates = 0;
};

// Autograd gradients of loss() w.r.t. every leaf vs central differences with step h.
inline GradCheckResult gradient_check(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> leaves,
                                      double h = 1e-5) {
  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  backward(loss());
  GradCheckResult result;
  for (auto& leaf : leaves) {
    const std::vector<double> analytic = leaf.has_grad() ? std::vector<double>(leaf.grad().begin(), leaf.grad().end())
                                                         : std::vector<double>(leaf.numel(), 0.0);
    const std::vector<double> original(leaf.data().begin(), leaf.data().end());
    auto objective = [&](const Tensor<double>& probe) {
      std::copy(probe.data().begin(), probe.data().end(), leaf.mutable_data().begin());
      return loss().item();
    };
    const Tensor<double> numeric = finite_diff_grad<double>(objective, leaf, h);
    std::copy(original.begin(), original.end(), leaf.mutable_data().begin());
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i], numeric.data()[i]));
    }
    result.coordinates += analytic.size();
  }
  return result;
}

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = numel(shape);
  return Tensor<double>(std::move(shape), random_vector(n, rng, lo, hi));
}

// Randomizes every model parameter (including biases and LN) so no gradient path is trivially zero.
inline void randomize_parameters(const Model<double>& model, std::mt19937_64& rng, double scale = 0.5) {
  for (auto& p : model.parameters()) {
    auto t = p.tensor;
    for (auto& v : t.mutable_data()) v = scale * (2.0 * detail::unit_uniform(rng) - 1.0);
  }
}

inline ModelConfig gradcheck_model_config(std::size_t depth) {
  ModelConfig c;
  c.image_size = 8;
  c.patch_size = 4;  // N = 4
  c.channels_in = 3;
  c.dim = 4;
  c.depth = depth;
  c.expansion = 2;
  c.num_classes = 5;
  return c;
}

inline std::vector<Tensor<double>> mixer_leaves(const MixerParams<double>& p) {
  return {p.ln_gamma, p.ln_beta, p.w1, p.b1, p.w2, p.b2};
}

// Weighted-sum loss against a fixed random probe keeps every output coordinate in play.
inline Tensor<double> probe_loss(const Tensor<double>& out, const Tensor<double>& probe) { return sum(mul(out, probe)); }

inline CheckReport gradient_checks(std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  CheckReport report;
  const double tol = 1e-4;

  for (auto kind : {TransformKind::Dct, TransformKind::Hadamard}) {
    auto x = random_tensor({2, 4, 8}, rng);
    auto probe = random_tensor({2, 4, 8}, rng);
    auto r = gradient_check([&] { return probe_loss(transform2d(x, kind), probe); }, {x});
    report.lines.push_back({to_string(kind) + "2d autograd vs finite differences (rel)", r.max_rel_error, tol});
  }

  const auto cfg = gradcheck_model_config(1);
  auto model = init_model<double>(cfg, seed);
  randomize_parameters(model, rng);
  for (const auto& mixer : model.mixers) {
    auto x = random_tensor({1, 4, 4}, rng);
    auto probe = random_tensor({1, 4, 4}, rng);
    auto leaves = mixer_leaves(mixer);
    leaves.push_back(x);
    auto r = gradient_check([&] { return probe_loss(mixer_forward(x, mixer), probe); }, leaves);
    report.lines.push_back({to_string(mixer.kind) + " mixer (B=1,N=4,C=4,f=2) vs finite differences (rel)",
                            r.max_rel_error, tol});
  }
  {
    auto x = random_tensor({1, 4, 4}, rng);
    auto probe = random_tensor({1, 4, 4}, rng);
    auto leaves = mixer_leaves(model.mixers[0]);
    for (auto& t : mixer_leaves(model.mixers[1])) leaves.push_back(t);
    leaves.push_back(x);
    auto r = gradient_check(
        [&] { return probe_loss(mc_block_forward(x, model.mixers[0], model.mixers[1]), probe); }, leaves);
    report.lines.push_back({"MC-Block (B=1,N=4,C=4,f=2) vs finite differences (rel)", r.max_rel_error, tol});
  }
  {
    auto images = random_tensor({2, 3, 8, 8}, rng);
    std::vector<double> t(2 * cfg.num_classes, 0.0);
    t[1] = 1.0;
    t[cfg.num_classes + 3] = 1.0;
    Tensor<double> targets({2, cfg.num_classes}, t);
    std::vector<Tensor<double>> leaves;
    for (const auto& p : model.parameters()) leaves.push_back(p.tensor);
    leaves.push_back(images);
    auto r = gradient_check([&] { return softmax_cross_entropy(model_forward(images, model), targets); }, leaves);
    report.lines.push_back({"toy model (depth 1, N=4, C=4) vs finite differences (rel)", r.max_rel_error, tol});
  }
  return report;
}

}  // namespace mcmlp
