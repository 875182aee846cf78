#pragma once

// The MC-MLP network: patch embedding, a stack of MC-Blocks (each a Hadamard
// mixer followed by a DCT mixer), token mean pooling and a linear head.
//
// One mixer maps X in [B, N, C] to
//   Y  = T(X)                      2D transform over each sample's N x C slab
//   Z  = concat_last(Y, X)         [B, N, 2C]
//   Z' = LN(Z)
//   Z''= act(W2 act(W1 Z' + b1) + b2) + X
// with W1: 2C -> f*C and W2: f*C -> C so the residual is well typed.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mcmlp/error.hpp"
#include "mcmlp/tensor.hpp"
#include "mcmlp/transforms.hpp"

namespace mcmlp {

inline constexpr double kLayerNormEps = 1e-6;

struct ModelConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 4;
  std::size_t channels_in = 3;
  std::size_t dim = 128;
  std::size_t depth = 8;
  std::size_t expansion = 3;
  std::size_t num_classes = 100;
  std::array<TransformKind, 2> mixer_order{TransformKind::Hadamard, TransformKind::Dct};
  // Apply the activation after W2 as well as after W1.
  bool outer_activation = true;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t tokens() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels_in; }
  std::size_t hidden() const { return expansion * dim; }

  void validate() const {
    if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
      throw ValidationError("image_size (" + std::to_string(image_size) + ") must be a positive multiple of patch_size (" +
                            std::to_string(patch_size) + ")");
    }
    if (!is_power_of_two(tokens())) {
      throw ValidationError("token count N = (image_size/patch_size)^2 = " + std::to_string(tokens()) +
                            " must be a power of 2");
    }
    if (!is_power_of_two(dim)) {
      throw ValidationError("dim C = " + std::to_string(dim) + " must be a power of 2");
    }
    if (depth < 1) throw ValidationError("depth must be >= 1");
    if (expansion < 1) throw ValidationError("expansion f must be >= 1");
    if (num_classes < 2) throw ValidationError("num_classes must be >= 2");
    if (channels_in < 1) throw ValidationError("channels_in must be >= 1");
  }

  bool operator==(const ModelConfig&) const = default;

  // Small CPU-friendly configuration: 32x32 input, patch 4 (N = 64), C = 64, depth 2.
  static ModelConfig toy() {
    ModelConfig c;
    c.dim = 64;
    c.depth = 2;
    return c;
  }
};

template <typename T>
struct MixerParams {
  TransformKind kind = TransformKind::Hadamard;
  Tensor<T> ln_gamma;  // [2C]
  Tensor<T> ln_beta;   // [2C]
  Tensor<T> w1;        // [2C, fC]
  Tensor<T> b1;        // [fC]
  Tensor<T> w2;        // [fC, C]
  Tensor<T> b2;        // [C]
};

template <typename T>
struct PatchEmbedParams {
  Tensor<T> projection;  // [p*p*Cin, C]
  Tensor<T> bias;        // [C]
};

template <typename T>
struct HeadParams {
  Tensor<T> weight;  // [C, classes]
  Tensor<T> bias;    // [classes]
};

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T> tensor;
  bool decay;  // weight matrices decay; biases and LN parameters do not
};

template <typename T>
struct Model {
  ModelConfig config;
  PatchEmbedParams<T> embed;
  std::vector<MixerParams<T>> mixers;  // 2 * depth, block-major
  HeadParams<T> head;

  // Stable, ordered parameter list. Handles share storage with the model.
  std::vector<ParamRef<T>> parameters() const {
    std::vector<ParamRef<T>> out;
    out.push_back({"embed.projection", embed.projection, true});
    out.push_back({"embed.bias", embed.bias, false});
    for (std::size_t i = 0; i < mixers.size(); ++i) {
      const auto& m = mixers[i];
      const std::string p = "blocks." + std::to_string(i / 2) + "." + to_string(m.kind) + ".";
      out.push_back({p + "ln_gamma", m.ln_gamma, false});
      out.push_back({p + "ln_beta", m.ln_beta, false});
      out.push_back({p + "w1", m.w1, true});
      out.push_back({p + "b1", m.b1, false});
      out.push_back({p + "w2", m.w2, true});
      out.push_back({p + "b2", m.b2, false});
    }
    out.push_back({"head.weight", head.weight, true});
    out.push_back({"head.bias", head.bias, false});
    return out;
  }

  void zero_grad() const {
    for (auto& p : parameters()) {
      auto t = p.tensor;
      t.zero_grad();
    }
  }
};

// Expected tensor shapes for a config, in parameters() order.
inline std::vector<Shape> parameter_shapes(const ModelConfig& c) {
  std::vector<Shape> s{{c.patch_dim(), c.dim}, {c.dim}};
  for (std::size_t i = 0; i < 2 * c.depth; ++i) {
    s.insert(s.end(), {{2 * c.dim}, {2 * c.dim}, {2 * c.dim, c.hidden()}, {c.hidden()}, {c.hidden(), c.dim}, {c.dim}});
  }
  s.push_back({c.dim, c.num_classes});
  s.push_back({c.num_classes});
  return s;
}

namespace detail {

// Portable uniform double in [0, 1) from the top 53 bits of a 64-bit Mersenne Twister draw.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename T>
Tensor<T> uniform_tensor(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>((2.0 * unit_uniform(rng) - 1.0) * bound);
  return Tensor<T>(std::move(shape), std::move(v), true);
}

template <typename T>
Tensor<T> filled(Shape shape, T value) {
  return Tensor<T>(std::move(shape), value, true);
}

}  // namespace detail

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases 0; LN gamma 1, beta 0.
template <typename T>
Model<T> init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  Model<T> m;
  m.config = config;
  const std::size_t c = config.dim;
  const std::size_t h = config.hidden();
  m.embed.projection = detail::uniform_tensor<T>({config.patch_dim(), c}, config.patch_dim(), rng);
  m.embed.bias = detail::filled<T>({c}, T(0));
  for (std::size_t b = 0; b < config.depth; ++b) {
    for (auto kind : config.mixer_order) {
      MixerParams<T> p;
      p.kind = kind;
      p.ln_gamma = detail::filled<T>({2 * c}, T(1));
      p.ln_beta = detail::filled<T>({2 * c}, T(0));
      p.w1 = detail::uniform_tensor<T>({2 * c, h}, 2 * c, rng);
      p.b1 = detail::filled<T>({h}, T(0));
      p.w2 = detail::uniform_tensor<T>({h, c}, h, rng);
      p.b2 = detail::filled<T>({c}, T(0));
      m.mixers.push_back(std::move(p));
    }
  }
  m.head.weight = detail::uniform_tensor<T>({c, config.num_classes}, c, rng);
  m.head.bias = detail::filled<T>({config.num_classes}, T(0));
  return m;
}

// Deep copy with element type conversion; the copy owns fresh parameter storage.
template <typename U, typename T>
Model<U> model_cast(const Model<T>& src) {
  auto conv = [](const Tensor<T>& t) {
    std::vector<U> v(t.data().begin(), t.data().end());
    return Tensor<U>(t.shape(), std::move(v), true);
  };
  Model<U> m;
  m.config = src.config;
  m.embed = {conv(src.embed.projection), conv(src.embed.bias)};
  for (const auto& p : src.mixers) {
    m.mixers.push_back({p.kind, conv(p.ln_gamma), conv(p.ln_beta), conv(p.w1), conv(p.b1), conv(p.w2), conv(p.b2)});
  }
  m.head = {conv(src.head.weight), conv(src.head.bias)};
  return m;
}

// images [B, Cin, H, W] -> tokens [B, N, C]
template <typename T>
Tensor<T> patch_embed(const Tensor<T>& images, const PatchEmbedParams<T>& params, std::size_t patch_size) {
  return add_bias(matmul(extract_patches(images, patch_size), params.projection), params.bias);
}

template <typename T>
Tensor<T> mixer_forward(const Tensor<T>& x, const MixerParams<T>& p, bool outer_activation = true) {
  if (x.rank() != 3) throw ShapeError("mixer_forward: expected [B, N, C], got " + shape_str(x.shape()));
  Tensor<T> y = transform2d(x, p.kind);
  Tensor<T> z = concat_last(y, x);
  Tensor<T> zn = layer_norm(z, p.ln_gamma, p.ln_beta, static_cast<T>(kLayerNormEps));
  Tensor<T> hidden = gelu(add_bias(matmul(zn, p.w1), p.b1));
  Tensor<T> mlp = add_bias(matmul(hidden, p.w2), p.b2);
  if (outer_activation) mlp = gelu(mlp);
  return add(mlp, x);
}

template <typename T>
Tensor<T> mc_block_forward(const Tensor<T>& x, const MixerParams<T>& first, const MixerParams<T>& second,
                           bool outer_activation = true) {
  return mixer_forward(mixer_forward(x, first, outer_activation), second, outer_activation);
}

template <typename T>
Tensor<T> model_forward(const Tensor<T>& images, const Model<T>& model) {
  const auto& c = model.config;
  if (images.rank() != 4 || images.dim(1) != c.channels_in || images.dim(2) != c.image_size ||
      images.dim(3) != c.image_size) {
    throw ShapeError("model_forward: images " + shape_str(images.shape()) + " do not match [B, " +
                     std::to_string(c.channels_in) + ", " + std::to_string(c.image_size) + ", " +
                     std::to_string(c.image_size) + "]");
  }
  Tensor<T> x = patch_embed(images, model.embed, c.patch_size);
  for (std::size_t i = 0; i + 1 < model.mixers.size(); i += 2) {
    x = mc_block_forward(x, model.mixers[i], model.mixers[i + 1], c.outer_activation);
  }
  return add_bias(matmul(mean_tokens(x), model.head.weight), model.head.bias);
}

// Trainable scalars of one mixer: LN (2 * 2C) + W1/b1 (2C*fC + fC) + W2/b2 (fC*C + C).
inline std::uint64_t mixer_param_count(std::uint64_t dim, std::uint64_t expansion) {
  const std::uint64_t h = expansion * dim;
  return 2 * (2 * dim) + 2 * dim * h + h + h * dim + dim;
}

inline std::uint64_t count_params(const ModelConfig& c) {
  const std::uint64_t embed = std::uint64_t(c.patch_dim()) * c.dim + c.dim;
  const std::uint64_t head = std::uint64_t(c.dim) * c.num_classes + c.num_classes;
  return embed + std::uint64_t(c.depth) * 2 * mixer_param_count(c.dim, c.expansion) + head;
}

// Per-token GEMM multiply-accumulates of one mixer over N tokens.
inline std::uint64_t mixer_matmul_macs(std::uint64_t tokens, std::uint64_t dim, std::uint64_t expansion) {
  const std::uint64_t h = expansion * dim;
  return tokens * (2 * dim * h + h * dim);
}

// Single-image forward estimate: GEMM MACs plus N*C*log2(N*C) per 2D transform.
inline std::uint64_t count_macs(const ModelConfig& c) {
  const std::uint64_t n = c.tokens();
  const std::uint64_t nc = n * c.dim;
  const std::uint64_t transform = nc * log2_exact(nc);
  const std::uint64_t embed = n * c.patch_dim() * c.dim;
  const std::uint64_t head = std::uint64_t(c.dim) * c.num_classes;
  const std::uint64_t mixer = mixer_matmul_macs(n, c.dim, c.expansion) + transform;
  return embed + std::uint64_t(c.depth) * 2 * mixer + head;
}

}  // namespace mcmlp
