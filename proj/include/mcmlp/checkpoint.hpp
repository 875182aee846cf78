#pragma once

// Checkpoint layout (all integers little-endian):
//   "MCML" | u32 version | model config | u32 tensor count
//   per tensor: u32 name length | name | u32 rank | u32 dims[rank] | f32 values
//   u8 has_state [ | u64 step | per tensor: f32 m[] | f32 v[] ]
//   u64 FNV-1a checksum of every preceding byte

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcmlp/cifar.hpp"
#include "mcmlp/error.hpp"
#include "mcmlp/model.hpp"
#include "mcmlp/training.hpp"

namespace mcmlp {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'M', 'C', 'M', 'L'};

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    auto p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    auto p = take(n);
    return std::string(p.begin(), p.end());
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("checkpoint: unexpected end of data");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline void write_config(ByteWriter& w, const ModelConfig& c) {
  for (auto v : {c.image_size, c.patch_size, c.channels_in, c.dim, c.depth, c.expansion, c.num_classes}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u8(c.mixer_order[0] == TransformKind::Dct);
  w.u8(c.mixer_order[1] == TransformKind::Dct);
  w.u8(c.outer_activation);
}

inline ModelConfig read_config(ByteReader& r) {
  ModelConfig c;
  c.image_size = r.u32();
  c.patch_size = r.u32();
  c.channels_in = r.u32();
  c.dim = r.u32();
  c.depth = r.u32();
  c.expansion = r.u32();
  c.num_classes = r.u32();
  c.mixer_order[0] = r.u8() ? TransformKind::Dct : TransformKind::Hadamard;
  c.mixer_order[1] = r.u8() ? TransformKind::Dct : TransformKind::Hadamard;
  c.outer_activation = r.u8() != 0;
  return c;
}

}  // namespace detail

template <typename T>
struct LoadedCheckpoint {
  Model<T> model;
  std::optional<AdamWState<T>> state;
};

template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const Model<T>& model, const AdamWState<T>* state = nullptr) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  detail::write_config(w, model.config);
  const auto params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.u32(static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (T v : p.tensor.data()) w.f32(static_cast<float>(v));
  }
  const bool with_state = state != nullptr && !state->m.empty();
  w.u8(with_state);
  if (with_state) {
    if (state->m.size() != params.size()) throw ShapeError("checkpoint: optimizer state does not match model");
    w.u64(state->step);
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (T v : state->m[i]) w.f32(static_cast<float>(v));
      for (T v : state->v[i]) w.f32(static_cast<float>(v));
    }
  }
  const std::uint64_t sum = fnv1a64(w.buffer());
  w.u64(sum);
  return std::move(w.buffer());
}

template <typename T>
LoadedCheckpoint<T> deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic (not an MCML file)");
  }
  detail::ByteReader r(bytes.first(bytes.size() - 8));
  r.str(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint: format version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  detail::ByteReader tail(bytes.last(8));
  if (tail.u64() != fnv1a64(bytes.first(bytes.size() - 8))) throw ChecksumError("checkpoint: checksum mismatch");

  LoadedCheckpoint<T> out;
  ModelConfig config = detail::read_config(r);
  try {
    config.validate();
  } catch (const ValidationError& e) {
    throw CheckpointShapeError(std::string("checkpoint: embedded config invalid: ") + e.what());
  }
  out.model = init_model<T>(config, 0);
  const auto params = out.model.parameters();
  const std::uint32_t count = r.u32();
  if (count != params.size()) {
    throw CheckpointShapeError("checkpoint: " + std::to_string(count) + " tensors, config implies " +
                               std::to_string(params.size()));
  }
  for (const auto& p : params) {
    const std::string name = r.str(r.u32());
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u32();
    if (name != p.name || shape != p.tensor.shape()) {
      throw CheckpointShapeError("checkpoint: tensor " + name + " " + shape_str(shape) + " does not match expected " +
                                 p.name + " " + shape_str(p.tensor.shape()));
    }
    auto dst = Tensor<T>(p.tensor).mutable_data();
    for (auto& v : dst) v = static_cast<T>(r.f32());
  }
  if (r.u8()) {
    AdamWState<T> st;
    st.step = r.u64();
    for (const auto& p : params) {
      std::vector<T> m(p.tensor.numel()), v(p.tensor.numel());
      for (auto& x : m) x = static_cast<T>(r.f32());
      for (auto& x : v) x = static_cast<T>(r.f32());
      st.m.push_back(std::move(m));
      st.v.push_back(std::move(v));
    }
    out.state = std::move(st);
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes before checksum");
  return out;
}

template <typename T>
void save_checkpoint(const Model<T>& model, const AdamWState<T>* state, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(model, state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint<T>(read_file_bytes(path));
}

// Number of parameter scalars stored in a serialized checkpoint (walks the tensor table).
inline std::uint64_t checkpoint_scalar_count(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.str(4);
  r.u32();
  detail::read_config(r);
  const std::uint32_t count = r.u32();
  std::uint64_t total = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    r.str(r.u32());
    const std::uint32_t rank = r.u32();
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) n *= r.u32();
    for (std::uint64_t k = 0; k < n; ++k) r.f32();
    total += n;
  }
  return total;
}

}  // namespace mcmlp
