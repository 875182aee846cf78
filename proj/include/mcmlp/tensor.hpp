#pragma once

// Dense row-major tensors with a tape-based reverse-mode autograd.
//
// A Tensor<T> is a shared handle onto a graph node. Operations on tensors that
// require gradients record their inputs and a backward rule; backward(loss)
// replays those rules in reverse execution order. T is double for oracle tests
// and float for training runs.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mcmlp/error.hpp"

namespace mcmlp {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

inline std::uint64_t next_sequence() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t seq = next_sequence();
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;

}  // namespace detail

// Disables graph recording on the current thread while alive (inference, optimizer updates).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodeType = detail::Node<T>;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false)
      : node_(std::make_shared<NodeType>()) {
    validate_shape(shape);
    node_->value.assign(mcmlp::numel(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<NodeType>()) {
    validate_shape(shape);
    if (values.size() != mcmlp::numel(shape)) {
      throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill shape " +
                       shape_str(shape));
    }
    node_->value = std::move(values);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
  static Tensor from(Shape shape, std::initializer_list<T> values) {
    return Tensor(std::move(shape), std::vector<T>(values));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  // Writable view for parameter initialization and optimizer updates.
  std::span<T> mutable_data() { return node_->value; }
  T at(std::size_t i) const { return node_->value.at(i); }
  T item() const {
    if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not scalar");
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
  }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  // Copy of the values with no graph history.
  Tensor detach() const { return Tensor(shape(), node_->value); }

  const std::shared_ptr<NodeType>& node() const { return node_; }

  // Builds an op result; graph edges are recorded only when some input needs gradients.
  static Tensor make_result(Shape shape, std::vector<T> values, std::vector<Tensor> inputs,
                            std::function<void(NodeType&)> backward) {
    Tensor out(std::move(shape), std::move(values));
    if (!detail::grad_mode()) return out;
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (!needs) return out;
    out.node_->requires_grad = true;
    for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
    out.node_->backward = std::move(backward);
    return out;
  }

 private:
  static void validate_shape(const Shape& shape) {
    for (auto d : shape) {
      if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_str(shape));
    }
  }

  std::shared_ptr<NodeType> node_;
};

// Ordered record of the operations reachable from a loss, in execution order.
template <typename T>
class Tape {
 public:
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  static Tape record(const Tensor<T>& root) {
    Tape tape;
    tape.root_ = root.node();
    std::unordered_set<const detail::Node<T>*> seen;
    std::vector<NodePtr> stack{root.node()};
    while (!stack.empty()) {
      NodePtr n = std::move(stack.back());
      stack.pop_back();
      if (!n->requires_grad || !seen.insert(n.get()).second) continue;
      tape.entries_.push_back(n);
      for (const auto& in : n->inputs) stack.push_back(in);
    }
    std::sort(tape.entries_.begin(), tape.entries_.end(),
              [](const NodePtr& a, const NodePtr& b) { return a->seq < b->seq; });
    return tape;
  }

  const std::vector<NodePtr>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  // Seeds d(root)/d(root) = 1 and runs every backward rule from last op to first.
  void replay() const {
    if (!root_ || !root_->requires_grad) return;
    root_->grad_buffer()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      auto& n = **it;
      if (n.backward && !n.grad.empty()) n.backward(n);
    }
  }

 private:
  NodePtr root_;
  std::vector<NodePtr> entries_;
};

// Accumulates d(loss)/d(t) into every requires_grad tensor reachable from loss.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  Tape<T>::record(loss).replay();
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void accumulate(Node<T>& input, std::span<const T> delta) {
  if (!input.requires_grad) return;
  auto& g = input.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

}  // namespace detail

// [.., m, k] x [k, n] -> [.., m, n]; leading axes of a are folded into the row count.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t k = b.dim(0);
  const std::size_t n = b.dim(1);
  const std::size_t rows = a.numel() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;

  std::vector<T> out(rows * n);
  detail::MatrixMap<T>(out.data(), rows, n).noalias() =
      detail::ConstMatrixMap<T>(a.data().data(), rows, k) * detail::ConstMatrixMap<T>(b.data().data(), k, n);

  return Tensor<T>::make_result(std::move(out_shape), std::move(out), {a, b},
                                [rows, k, n](detail::Node<T>& self) {
                                  auto& in_a = *self.inputs[0];
                                  auto& in_b = *self.inputs[1];
                                  detail::ConstMatrixMap<T> g(self.grad.data(), rows, n);
                                  if (in_a.requires_grad) {
                                    detail::MatrixMap<T>(in_a.grad_buffer().data(), rows, k).noalias() +=
                                        g * detail::ConstMatrixMap<T>(in_b.value.data(), k, n).transpose();
                                  }
                                  if (in_b.requires_grad) {
                                    detail::MatrixMap<T>(in_b.grad_buffer().data(), k, n).noalias() +=
                                        detail::ConstMatrixMap<T>(in_a.value.data(), rows, k).transpose() * g;
                                  }
                                });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    detail::accumulate<T>(*self.inputs[0], self.grad);
    detail::accumulate<T>(*self.inputs[1], self.grad);
  });
}

// x + bias broadcast over the last axis.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (bias.rank() != 1 || bias.dim(0) != x.shape().back()) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
                     shape_str(x.shape()));
  }
  const std::size_t c = bias.numel();
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.data()[i % c];
  return Tensor<T>::make_result(x.shape(), std::move(out), {x, bias}, [c](detail::Node<T>& self) {
    detail::accumulate<T>(*self.inputs[0], self.grad);
    auto& b = *self.inputs[1];
    if (b.requires_grad) {
      auto& gb = b.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % c] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    if (x.requires_grad) {
      auto& gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      auto& gy = y.grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) gy[i] += self.grad[i] * x.value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [factor](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  return Tensor<T>::make_result({1}, {total}, {x}, [](detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

// Concatenates along the last axis: a's slots first, then b's.
template <typename T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size() || !std::equal(sa.begin(), sa.end() - 1, sb.begin())) {
    throw ShapeError("concat_last: leading shapes differ " + shape_str(sa) + " vs " + shape_str(sb));
  }
  const std::size_t ca = sa.back();
  const std::size_t cb = sb.back();
  const std::size_t rows = a.numel() / ca;
  Shape out_shape = sa;
  out_shape.back() = ca + cb;
  std::vector<T> out(rows * (ca + cb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(b.data().data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), {a, b},
                                [rows, ca, cb](detail::Node<T>& self) {
                                  auto& in_a = *self.inputs[0];
                                  auto& in_b = *self.inputs[1];
                                  const std::size_t w = ca + cb;
                                  if (in_a.requires_grad) {
                                    auto& g = in_a.grad_buffer();
                                    for (std::size_t r = 0; r < rows; ++r)
                                      for (std::size_t j = 0; j < ca; ++j) g[r * ca + j] += self.grad[r * w + j];
                                  }
                                  if (in_b.requires_grad) {
                                    auto& g = in_b.grad_buffer();
                                    for (std::size_t r = 0; r < rows; ++r)
                                      for (std::size_t j = 0; j < cb; ++j)
                                        g[r * cb + j] += self.grad[r * w + ca + j];
                                  }
                                });
}

// Per last-axis slice: (x - mean) / sqrt(var + eps) * gamma + beta, population variance.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::size_t c = x.shape().back();
  if (gamma.numel() != c || beta.numel() != c || gamma.rank() != 1 || beta.rank() != 1) {
    throw ShapeError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " +
                     shape_str(beta.shape()) + " do not match last axis of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / c;
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> rstd(rows);
  const T* in = x.data().data();
  const T* g = gamma.data().data();
  const T* bt = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = in + r * c;
    T mean = 0;
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= T(c);
    T var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= T(c);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < c; ++j) {
      const T h = (row[j] - mean) * rs;
      xhat[r * c + j] = h;
      out[r * c + j] = h * g[j] + bt[j];
    }
  }
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, c, xhat = std::move(xhat), rstd = std::move(rstd)](detail::Node<T>& self) {
        auto& in_x = *self.inputs[0];
        auto& in_g = *self.inputs[1];
        auto& in_b = *self.inputs[2];
        const T* dy = self.grad.data();
        if (in_g.requires_grad || in_b.requires_grad) {
          auto& gg = in_g.grad_buffer();
          auto& gb = in_b.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
              gg[j] += dy[r * c + j] * xhat[r * c + j];
              gb[j] += dy[r * c + j];
            }
          }
        }
        if (in_x.requires_grad) {
          auto& gx = in_x.grad_buffer();
          const T* gamma_v = in_g.value.data();
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_d = 0;
            T mean_dh = 0;
            for (std::size_t j = 0; j < c; ++j) {
              const T d = dy[r * c + j] * gamma_v[j];
              mean_d += d;
              mean_dh += d * xhat[r * c + j];
            }
            mean_d /= T(c);
            mean_dh /= T(c);
            for (std::size_t j = 0; j < c; ++j) {
              const T d = dy[r * c + j] * gamma_v[j];
              gx[r * c + j] += rstd[r] * (d - mean_d - xhat[r * c + j] * mean_dh);
            }
          }
        }
      });
}

// x * Phi(x) with the exact (erf-based) Gaussian CDF.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.data()[i];
    if (!std::isfinite(v)) throw NumericalError("gelu: non-finite input at index " + std::to_string(i));
    out[i] = v * T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
  }
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
    constexpr T inv_sqrt2pi = T(0.39894228040143267794);
    auto& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = in.value[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

// Mean over the batch of -sum(target * log_softmax(logits)). Targets are constants.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& targets) {
  if (logits.rank() != 2 || logits.shape() != targets.shape()) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_str(logits.shape()) + " vs targets " +
                     shape_str(targets.shape()));
  }
  const std::size_t batch = logits.dim(0);
  const std::size_t k = logits.dim(1);
  if (k < 2) throw ValidationError("softmax_cross_entropy: need at least 2 classes");
  const T* z = logits.data().data();
  const T* t = targets.data().data();
  std::vector<T> probs(batch * k);
  double loss = 0;
  for (std::size_t r = 0; r < batch; ++r) {
    T row_sum = 0;
    for (std::size_t j = 0; j < k; ++j) row_sum += t[r * k + j];
    if (std::abs(double(row_sum) - 1.0) > 1e-6) {
      throw ValidationError("softmax_cross_entropy: target row " + std::to_string(r) + " sums to " +
                            std::to_string(double(row_sum)));
    }
    T mx = z[r * k];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z[r * k + j]);
    T denom = 0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(z[r * k + j] - mx);
    const T log_denom = std::log(denom);
    for (std::size_t j = 0; j < k; ++j) {
      const T logp = z[r * k + j] - mx - log_denom;
      probs[r * k + j] = std::exp(logp);
      loss -= double(t[r * k + j]) * double(logp);
    }
  }
  const T mean_loss = T(loss / double(batch));
  return Tensor<T>::make_result(
      {1}, {mean_loss}, {logits, targets},
      [batch, k, probs = std::move(probs)](detail::Node<T>& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        const auto& tgt = self.inputs[1]->value;
        auto& g = in.grad_buffer();
        const T s = self.grad[0] / T(batch);
        for (std::size_t i = 0; i < batch * k; ++i) g[i] += s * (probs[i] - tgt[i]);
      });
}

// [B, N, C] -> [B, C], arithmetic mean over tokens.
template <typename T>
Tensor<T> mean_tokens(const Tensor<T>& x) {
  if (x.rank() != 3) throw ShapeError("mean_tokens: expected [B, N, C], got " + shape_str(x.shape()));
  const std::size_t b = x.dim(0), n = x.dim(1), c = x.dim(2);
  std::vector<T> out(b * c, T(0));
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t j = 0; j < c; ++j) out[s * c + j] += x.data()[(s * n + t) * c + j];
  for (auto& v : out) v /= T(n);
  return Tensor<T>::make_result({b, c}, std::move(out), {x}, [b, n, c](detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t s = 0; s < b; ++s)
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < c; ++j) g[(s * n + t) * c + j] += self.grad[s * c + j] / T(n);
  });
}

// [B, Cin, H, W] -> [B, (H/p)(W/p), Cin*p*p]. Tokens in raster order of patches;
// within a patch the layout is channel-major, then row, then column.
template <typename T>
Tensor<T> extract_patches(const Tensor<T>& images, std::size_t patch) {
  if (images.rank() != 4 || patch == 0 || images.dim(2) % patch || images.dim(3) % patch) {
    throw ShapeError("extract_patches: shape " + shape_str(images.shape()) +
                     " is not tileable by patch " + std::to_string(patch));
  }
  const std::size_t b = images.dim(0), cin = images.dim(1), h = images.dim(2), w = images.dim(3);
  const std::size_t gh = h / patch, gw = w / patch;
  const std::size_t plen = cin * patch * patch;
  // index[k] = source offset of output slot k
  std::vector<std::size_t> index(images.numel());
  std::size_t k = 0;
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t py = 0; py < gh; ++py)
      for (std::size_t px = 0; px < gw; ++px)
        for (std::size_t ch = 0; ch < cin; ++ch)
          for (std::size_t dy = 0; dy < patch; ++dy)
            for (std::size_t dx = 0; dx < patch; ++dx)
              index[k++] = ((s * cin + ch) * h + py * patch + dy) * w + px * patch + dx;
  std::vector<T> out(images.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = images.data()[index[i]];
  return Tensor<T>::make_result({b, gh * gw, plen}, std::move(out), {images},
                                [index = std::move(index)](detail::Node<T>& self) {
                                  auto& g = self.inputs[0]->grad_buffer();
                                  for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += self.grad[i];
                                });
}

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate of x.
template <typename T, typename F>
Tensor<T> finite_diff_grad(F&& f, const Tensor<T>& x, T h) {
  if (!(h > T(0))) throw ValidationError("finite_diff_grad: step must be positive");
  Tensor<T> probe = x.detach();
  std::vector<T> out(x.numel());
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T orig = probe.data()[i];
    probe.mutable_data()[i] = orig + h;
    const T up = f(probe);
    probe.mutable_data()[i] = orig - h;
    const T down = f(probe);
    probe.mutable_data()[i] = orig;
    out[i] = (up - down) / (T(2) * h);
  }
  return Tensor<T>(x.shape(), std::move(out));
}

}  // namespace mcmlp
