#pragma once

// CIFAR-100 binary format: each record is <coarse label byte><fine label byte>
// followed by 3072 pixel bytes (R plane, G plane, B plane; 32x32 row-major each).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mcmlp/error.hpp"
#include "mcmlp/tensor.hpp"

namespace mcmlp {

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarChannels = 3;
inline constexpr std::size_t kCifarPixels = kCifarChannels * kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecordBytes = kCifarPixels + 2;
inline constexpr std::size_t kCifarFineClasses = 100;
inline constexpr std::size_t kCifarCoarseClasses = 20;

struct Cifar100Record {
  std::uint8_t coarse_label = 0;
  std::uint8_t fine_label = 0;
  std::array<std::uint8_t, kCifarPixels> pixels{};
};

inline std::vector<Cifar100Record> parse_cifar100(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("cifar100: file length " + std::to_string(bytes.size()) + " is not a multiple of " +
                      std::to_string(kCifarRecordBytes) + " (expected " +
                      std::to_string(bytes.size() / kCifarRecordBytes * kCifarRecordBytes) + " or " +
                      std::to_string((bytes.size() / kCifarRecordBytes + 1) * kCifarRecordBytes) + " bytes)");
  }
  std::vector<Cifar100Record> out(bytes.size() / kCifarRecordBytes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint8_t* p = bytes.data() + i * kCifarRecordBytes;
    auto& r = out[i];
    r.coarse_label = p[0];
    r.fine_label = p[1];
    if (r.coarse_label >= kCifarCoarseClasses || r.fine_label >= kCifarFineClasses) {
      throw FormatError("cifar100: record " + std::to_string(i) + " has label out of range (coarse " +
                        std::to_string(r.coarse_label) + ", fine " + std::to_string(r.fine_label) + ")");
    }
    std::copy_n(p + 2, kCifarPixels, r.pixels.begin());
  }
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline std::vector<Cifar100Record> load_cifar100(const std::filesystem::path& path) {
  return parse_cifar100(read_file_bytes(path));
}

inline void save_cifar100(const std::filesystem::path& path, std::span<const Cifar100Record> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& r : records) {
    out.put(static_cast<char>(r.coarse_label));
    out.put(static_cast<char>(r.fine_label));
    out.write(reinterpret_cast<const char*>(r.pixels.data()), kCifarPixels);
  }
}

// Random pixels with fine labels cycling 0..99 (coarse = fine / 5). Stand-in files for tests and dry runs.
inline std::vector<Cifar100Record> synthetic_cifar100(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Cifar100Record> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].fine_label = static_cast<std::uint8_t>(i % kCifarFineClasses);
    out[i].coarse_label = static_cast<std::uint8_t>(out[i].fine_label / 5);
    for (auto& p : out[i].pixels) p = static_cast<std::uint8_t>(rng() >> 56);
  }
  return out;
}

// Per-channel mean and standard deviation of pixel values scaled to [0, 1].
struct ChannelStats {
  std::array<double, kCifarChannels> mean{};
  std::array<double, kCifarChannels> std{};
};

inline ChannelStats channel_stats(std::span<const Cifar100Record> records) {
  ChannelStats s;
  const std::size_t plane = kCifarSide * kCifarSide;
  for (std::size_t c = 0; c < kCifarChannels; ++c) {
    double sum = 0, sq = 0;
    for (const auto& r : records) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = r.pixels[c * plane + i] / 255.0;
        sum += v;
        sq += v * v;
      }
    }
    const double n = static_cast<double>(records.size() * plane);
    s.mean[c] = n > 0 ? sum / n : 0.0;
    const double var = n > 0 ? sq / n - s.mean[c] * s.mean[c] : 0.0;
    s.std[c] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return s;
}

// Normalized images in [channel, row, col] order plus fine labels.
struct Dataset {
  std::size_t channels = kCifarChannels;
  std::size_t side = kCifarSide;
  std::size_t num_classes = kCifarFineClasses;
  std::vector<float> pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_floats() const { return channels * side * side; }
  std::span<const float> image(std::size_t i) const {
    return std::span<const float>(pixels).subspan(i * image_floats(), image_floats());
  }
};

inline Dataset to_dataset(std::span<const Cifar100Record> records, const ChannelStats& stats) {
  Dataset d;
  d.pixels.resize(records.size() * kCifarPixels);
  d.labels.resize(records.size());
  const std::size_t plane = kCifarSide * kCifarSide;
  for (std::size_t i = 0; i < records.size(); ++i) {
    d.labels[i] = records[i].fine_label;
    for (std::size_t c = 0; c < kCifarChannels; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        const double v = records[i].pixels[c * plane + p] / 255.0;
        d.pixels[i * kCifarPixels + c * plane + p] = static_cast<float>((v - stats.mean[c]) / stats.std[c]);
      }
    }
  }
  return d;
}

inline Dataset select(const Dataset& d, std::span<const std::size_t> indices) {
  Dataset out;
  out.channels = d.channels;
  out.side = d.side;
  out.num_classes = d.num_classes;
  out.pixels.reserve(indices.size() * d.image_floats());
  for (auto i : indices) {
    auto img = d.image(i);
    out.pixels.insert(out.pixels.end(), img.begin(), img.end());
    out.labels.push_back(d.labels.at(i));
  }
  return out;
}

// Seed-deterministic subset of k indices (sorted). Class-stratified when k >= num_classes:
// every class gets floor(k / classes) samples and the remainder goes to a seeded choice of classes.
inline std::vector<std::size_t> stratified_subset(std::span<const int> labels, std::size_t k, std::uint64_t seed,
                                                  std::size_t num_classes) {
  if (k >= labels.size()) {
    std::vector<std::size_t> all(labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  std::mt19937_64 rng(seed);
  auto shuffle = [&rng](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>((rng() >> 11) * 0x1.0p-53 * static_cast<double>(i));
      std::swap(v[i - 1], v[j]);
    }
  };
  std::vector<std::size_t> out;
  if (k < num_classes) {
    std::vector<std::size_t> all(labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    shuffle(all);
    out.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
  } else {
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(static_cast<std::size_t>(labels[i])).push_back(i);
    std::vector<std::size_t> class_order(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) class_order[c] = c;
    shuffle(class_order);
    std::vector<std::size_t> quota(num_classes, k / num_classes);
    for (std::size_t r = 0; r < k % num_classes; ++r) ++quota[class_order[r]];
    std::size_t shortfall = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      shuffle(by_class[c]);
      const std::size_t take = std::min(quota[c], by_class[c].size());
      shortfall += quota[c] - take;
      out.insert(out.end(), by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(take));
      by_class[c].erase(by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(take));
    }
    // Classes with too few samples: top up from the leftovers in class order.
    for (std::size_t c = 0; shortfall > 0 && c < num_classes; ++c) {
      const std::size_t take = std::min(shortfall, by_class[class_order[c]].size());
      out.insert(out.end(), by_class[class_order[c]].begin(),
                 by_class[class_order[c]].begin() + static_cast<std::ptrdiff_t>(take));
      shortfall -= take;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Stacks the given samples into [B, C, S, S], nearest-neighbour resampling when S differs from the stored side.
template <typename T>
Tensor<T> make_image_batch(const Dataset& d, std::span<const std::size_t> indices, std::size_t side) {
  const std::size_t b = indices.size();
  std::vector<T> v(b * d.channels * side * side);
  std::size_t k = 0;
  for (auto idx : indices) {
    auto img = d.image(idx);
    for (std::size_t c = 0; c < d.channels; ++c)
      for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
          const std::size_t sy = y * d.side / side;
          const std::size_t sx = x * d.side / side;
          v[k++] = static_cast<T>(img[(c * d.side + sy) * d.side + sx]);
        }
  }
  return Tensor<T>({b, d.channels, side, side}, std::move(v));
}

template <typename T>
Tensor<T> one_hot(std::span<const int> labels, std::size_t num_classes) {
  std::vector<T> v(labels.size() * num_classes, T(0));
  for (std::size_t i = 0; i < labels.size(); ++i) v[i * num_classes + static_cast<std::size_t>(labels[i])] = T(1);
  return Tensor<T>({labels.size(), num_classes}, std::move(v));
}

}  // namespace mcmlp
