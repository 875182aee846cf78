#pragma once

// AdamW with decoupled weight decay, warmup + cosine schedule, mixup/cutmix,
// the epoch loop and top-1 evaluation.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mcmlp/cifar.hpp"
#include "mcmlp/error.hpp"
#include "mcmlp/model.hpp"
#include "mcmlp/tensor.hpp"

namespace mcmlp {

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t warmup_epochs = 3;
  double base_lr = 0.01;
  double weight_decay = 1e-5;
  double mixup_alpha = 0.2;
  double cutmix_alpha = 0.4;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Unset means base_lr * 1e-2.
  std::optional<double> min_lr;

  double effective_min_lr() const { return min_lr.value_or(base_lr * 1e-2); }

  void validate() const {
    if (epochs <= warmup_epochs) throw ValidationError("epochs must exceed warmup_epochs");
    if (!(base_lr > 0)) throw ValidationError("base_lr must be > 0");
    if (weight_decay < 0 || mixup_alpha < 0 || cutmix_alpha < 0 || eps < 0 || effective_min_lr() < 0) {
      throw ValidationError("weight_decay, mixup_alpha, cutmix_alpha, eps and min_lr must be >= 0");
    }
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ValidationError("betas must lie in [0, 1)");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  }

  bool operator==(const TrainConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

template <typename T>
struct AdamWState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;
};

// One decoupled-weight-decay Adam update:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta <- theta (1 - lr wd) - lr mhat / (sqrt(vhat) + eps)
// Decay applies only to parameters flagged `decay`. Missing gradients count as zero.
template <typename T>
void adamw_step(const std::vector<ParamRef<T>>& params, AdamWState<T>& state, double lr, const TrainConfig& cfg) {
  for (const auto& p : params) {
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericalError("adamw: non-finite gradient in " + p.name);
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), T(0));
      state.v.emplace_back(p.tensor.numel(), T(0));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adamw: optimizer state does not match parameter list");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
  const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
  const T step_lr = static_cast<T>(lr);
  const T eps = static_cast<T>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto tensor = params[i].tensor;
    auto theta = tensor.mutable_data();
    auto grad = tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != theta.size()) throw ShapeError("adamw: state size mismatch for " + params[i].name);
    const T shrink = params[i].decay ? static_cast<T>(1.0 - lr * cfg.weight_decay) : T(1);
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const T g = grad.empty() ? T(0) : grad[j];
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      const T mhat = m[j] / bc1;
      const T vhat = v[j] / bc2;
      theta[j] = theta[j] * shrink - step_lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// Linear warmup 0 -> base_lr, then cosine from base_lr down to min_lr at the last step.
inline double lr_at(std::size_t step, std::size_t steps_per_epoch, const TrainConfig& cfg) {
  const std::size_t warmup = cfg.warmup_epochs * steps_per_epoch;
  const std::size_t total = cfg.epochs * steps_per_epoch;
  if (step < warmup) return cfg.base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  const double span = total > warmup + 1 ? static_cast<double>(total - 1 - warmup) : 1.0;
  const double progress = std::clamp(static_cast<double>(step - warmup) / span, 0.0, 1.0);
  const double lo = cfg.effective_min_lr();
  return lo + (cfg.base_lr - lo) * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

inline double sample_beta(double alpha, std::mt19937_64& rng) {
  if (alpha <= 0) return 1.0;
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double a = gamma(rng);
  const double b = gamma(rng);
  return (a + b) > 0 ? a / (a + b) : 0.5;
}

inline std::vector<std::size_t> random_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(detail::unit_uniform(rng) * static_cast<double>(i));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

// Images [B, C, H, W] and soft targets [B, K].
template <typename T>
struct Batch {
  Tensor<T> images;
  Tensor<T> targets;
};

namespace detail {

template <typename T>
void blend_targets(Tensor<T>& targets, std::span<const std::size_t> partner, T keep) {
  const std::size_t b = targets.dim(0);
  const std::size_t k = targets.dim(1);
  const std::vector<T> orig(targets.data().begin(), targets.data().end());
  auto out = targets.mutable_data();
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < k; ++j)
      out[i * k + j] = keep * orig[i * k + j] + (T(1) - keep) * orig[partner[i] * k + j];
}

}  // namespace detail

// x' = lambda x + (1 - lambda) x[partner], same for targets.
template <typename T>
void mixup_apply(Batch<T>& batch, double lambda, std::span<const std::size_t> partner) {
  const std::size_t b = batch.images.dim(0);
  const std::size_t per = batch.images.numel() / b;
  const T lam = static_cast<T>(lambda);
  const std::vector<T> orig(batch.images.data().begin(), batch.images.data().end());
  auto out = batch.images.mutable_data();
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < per; ++j)
      out[i * per + j] = lam * orig[i * per + j] + (T(1) - lam) * orig[partner[i] * per + j];
  detail::blend_targets(batch.targets, partner, lam);
}

template <typename T>
double mixup(Batch<T>& batch, double alpha, std::mt19937_64& rng) {
  if (batch.images.dim(0) < 2) return 1.0;
  const double lambda = sample_beta(alpha, rng);
  const auto partner = random_permutation(batch.images.dim(0), rng);
  mixup_apply(batch, lambda, partner);
  return lambda;
}

// Half-open pixel rectangle [y0, y1) x [x0, x1).
struct CutBox {
  std::size_t y0 = 0, y1 = 0, x0 = 0, x1 = 0;
  std::size_t area() const { return (y1 - y0) * (x1 - x0); }
};

// Box of area ratio (1 - lambda) centred uniformly in the image, clipped to its bounds.
inline CutBox cutmix_box(std::size_t height, std::size_t width, double lambda, std::mt19937_64& rng) {
  const double ratio = std::sqrt(std::clamp(1.0 - lambda, 0.0, 1.0));
  const auto cut_h = static_cast<long long>(static_cast<double>(height) * ratio);
  const auto cut_w = static_cast<long long>(static_cast<double>(width) * ratio);
  const auto cy = static_cast<long long>(detail::unit_uniform(rng) * static_cast<double>(height));
  const auto cx = static_cast<long long>(detail::unit_uniform(rng) * static_cast<double>(width));
  auto clip = [](long long v, std::size_t hi) {
    return static_cast<std::size_t>(std::clamp<long long>(v, 0, static_cast<long long>(hi)));
  };
  return CutBox{clip(cy - cut_h / 2, height), clip(cy + cut_h - cut_h / 2, height), clip(cx - cut_w / 2, width),
                clip(cx + cut_w - cut_w / 2, width)};
}

// Pastes the box from each partner image; returns the pasted-area fraction used as the partner label weight.
template <typename T>
double cutmix_apply(Batch<T>& batch, const CutBox& box, std::span<const std::size_t> partner) {
  const std::size_t b = batch.images.dim(0), c = batch.images.dim(1);
  const std::size_t h = batch.images.dim(2), w = batch.images.dim(3);
  const std::vector<T> orig(batch.images.data().begin(), batch.images.data().end());
  auto out = batch.images.mutable_data();
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = box.y0; y < box.y1; ++y)
        for (std::size_t x = box.x0; x < box.x1; ++x)
          out[((i * c + ch) * h + y) * w + x] = orig[((partner[i] * c + ch) * h + y) * w + x];
  const double pasted = static_cast<double>(box.area()) / static_cast<double>(h * w);
  detail::blend_targets(batch.targets, partner, static_cast<T>(1.0 - pasted));
  return pasted;
}

template <typename T>
double cutmix(Batch<T>& batch, double alpha, std::mt19937_64& rng) {
  if (batch.images.dim(0) < 2) return 0.0;
  const double lambda = sample_beta(alpha, rng);
  const auto partner = random_permutation(batch.images.dim(0), rng);
  const CutBox box = cutmix_box(batch.images.dim(2), batch.images.dim(3), lambda, rng);
  return cutmix_apply(batch, box, partner);
}

// Mixup or cutmix per batch (fair coin when both are enabled).
template <typename T>
void augment(Batch<T>& batch, const TrainConfig& cfg, std::mt19937_64& rng) {
  const bool use_mixup = cfg.mixup_alpha > 0;
  const bool use_cutmix = cfg.cutmix_alpha > 0;
  if (use_mixup && use_cutmix) {
    if (detail::unit_uniform(rng) < 0.5) {
      mixup(batch, cfg.mixup_alpha, rng);
    } else {
      cutmix(batch, cfg.cutmix_alpha, rng);
    }
  } else if (use_mixup) {
    mixup(batch, cfg.mixup_alpha, rng);
  } else if (use_cutmix) {
    cutmix(batch, cfg.cutmix_alpha, rng);
  }
}

// ---------------------------------------------------------------------------
// Loop
// ---------------------------------------------------------------------------

struct EpochMetrics {
  double mean_loss = 0;
  double lr = 0;  // rate used by the epoch's last step
  double seconds = 0;
  double images_per_second = 0;
  std::size_t steps = 0;
};

inline std::size_t steps_per_epoch(std::size_t dataset_size, std::size_t batch_size) {
  return (dataset_size + batch_size - 1) / batch_size;
}

inline std::mt19937_64 epoch_rng(std::uint64_t seed, std::size_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x6d636d6cu};
  return std::mt19937_64(seq);
}

// One pass over shuffled batches: augment, forward, loss, backward, AdamW with the scheduled rate.
template <typename T>
EpochMetrics train_epoch(const Model<T>& model, const Dataset& data, AdamWState<T>& state, const TrainConfig& cfg,
                         std::size_t epoch, bool augmentation = true) {
  if (data.size() == 0) throw ValidationError("train_epoch: empty dataset");
  const auto start = std::chrono::steady_clock::now();
  auto rng = epoch_rng(cfg.seed, epoch);
  const auto order = random_permutation(data.size(), rng);
  const std::size_t spe = steps_per_epoch(data.size(), cfg.batch_size);
  const auto params = model.parameters();
  EpochMetrics metrics;
  double loss_sum = 0;
  for (std::size_t b = 0; b < spe; ++b) {
    const std::size_t lo = b * cfg.batch_size;
    const std::size_t hi = std::min(lo + cfg.batch_size, data.size());
    std::span<const std::size_t> idx(order.data() + lo, hi - lo);
    std::vector<int> labels;
    for (auto i : idx) labels.push_back(data.labels[i]);
    Batch<T> batch{make_image_batch<T>(data, idx, model.config.image_size),
                   one_hot<T>(labels, model.config.num_classes)};
    if (augmentation) augment(batch, cfg, rng);

    model.zero_grad();
    Tensor<T> loss = softmax_cross_entropy(model_forward(batch.images, model), batch.targets);
    const double l = static_cast<double>(loss.item());
    if (!std::isfinite(l)) {
      throw NumericalError("train_epoch: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(b));
    }
    backward(loss);
    const double lr = lr_at(epoch * spe + b, spe, cfg);
    adamw_step(params, state, lr, cfg);
    loss_sum += l;
    metrics.lr = lr;
  }
  metrics.steps = spe;
  metrics.mean_loss = loss_sum / static_cast<double>(spe);
  metrics.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  metrics.images_per_second = metrics.seconds > 0 ? static_cast<double>(data.size()) / metrics.seconds : 0.0;
  return metrics;
}

// Argmax per row, ties to the lowest class index.
template <typename T>
std::vector<int> argmax_rows(std::span<const T> logits, std::size_t classes) {
  std::vector<int> out(logits.size() / classes);
  for (std::size_t r = 0; r < out.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < classes; ++j)
      if (logits[r * classes + j] > logits[r * classes + best]) best = j;
    out[r] = static_cast<int>(best);
  }
  return out;
}

template <typename T>
double top1_from_logits(std::span<const T> logits, std::size_t classes, std::span<const int> labels) {
  const auto pred = argmax_rows(logits, classes);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i];
  return labels.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(labels.size());
}

template <typename T>
double evaluate_top1(const Model<T>& model, const Dataset& data, std::size_t batch_size = 256) {
  if (data.size() == 0) throw ValidationError("evaluate_top1: empty dataset");
  NoGradGuard no_grad;
  std::size_t hit = 0;
  std::vector<std::size_t> idx;
  for (std::size_t lo = 0; lo < data.size(); lo += batch_size) {
    const std::size_t hi = std::min(lo + batch_size, data.size());
    idx.clear();
    for (std::size_t i = lo; i < hi; ++i) idx.push_back(i);
    const Tensor<T> logits = model_forward(make_image_batch<T>(data, idx, model.config.image_size), model);
    const auto pred = argmax_rows(logits.data(), model.config.num_classes);
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == data.labels[lo + i];
  }
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

}  // namespace mcmlp
