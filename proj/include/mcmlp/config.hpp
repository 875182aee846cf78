#pragma once

// Flat `key = value` run configuration. `#` starts a comment; unknown keys are errors.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "mcmlp/error.hpp"
#include "mcmlp/model.hpp"
#include "mcmlp/training.hpp"

namespace mcmlp {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw FormatError("config: " + key + " expects an integer, got '" + v + "'");
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw FormatError("config: " + key + " expects a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw FormatError("config: " + key + " expects true/false, got '" + v + "'");
}

inline TransformKind parse_kind(const std::string& key, const std::string& v) {
  if (v == "hadamard") return TransformKind::Hadamard;
  if (v == "dct") return TransformKind::Dct;
  throw FormatError("config: " + key + " expects hadamard or dct, got '" + v + "'");
}

inline std::pair<std::string, std::string> split_pair(const std::string& key, const std::string& v) {
  const auto comma = v.find(',');
  if (comma == std::string::npos) throw FormatError("config: " + key + " expects two comma-separated values");
  return {trim(v.substr(0, comma)), trim(v.substr(comma + 1))};
}

}  // namespace detail

inline RunConfig parse_run_config(std::istream& in) {
  using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
  using namespace detail;
  auto size_field = [](std::size_t ModelConfig::*f) -> Setter {
    return [f](RunConfig& c, const std::string& k, const std::string& v) { c.model.*f = parse_uint(k, v); };
  };
  const std::map<std::string, Setter> setters{
      {"image_size", size_field(&ModelConfig::image_size)},
      {"patch_size", size_field(&ModelConfig::patch_size)},
      {"channels_in", size_field(&ModelConfig::channels_in)},
      {"dim", size_field(&ModelConfig::dim)},
      {"depth", size_field(&ModelConfig::depth)},
      {"expansion", size_field(&ModelConfig::expansion)},
      {"num_classes", size_field(&ModelConfig::num_classes)},
      {"mixer_order",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         auto [a, b] = split_pair(k, v);
         c.model.mixer_order = {parse_kind(k, a), parse_kind(k, b)};
       }},
      {"outer_activation",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.model.outer_activation = parse_bool(k, v); }},
      {"epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.epochs = parse_uint(k, v); }},
      {"warmup_epochs",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.train.warmup_epochs = parse_uint(k, v); }},
      {"base_lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.base_lr = parse_double(k, v); }},
      {"weight_decay",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.train.weight_decay = parse_double(k, v); }},
      {"mixup_alpha",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.train.mixup_alpha = parse_double(k, v); }},
      {"cutmix_alpha",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.train.cutmix_alpha = parse_double(k, v); }},
      {"batch_size",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.train.batch_size = parse_uint(k, v); }},
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.seed = parse_uint(k, v); }},
      {"betas",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         auto [a, b] = split_pair(k, v);
         c.train.beta1 = parse_double(k, a);
         c.train.beta2 = parse_double(k, b);
       }},
      {"eps", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.eps = parse_double(k, v); }},
      {"min_lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.min_lr = parse_double(k, v); }},
  };

  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) throw FormatError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->second(cfg, key, value);
  }
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  return parse_run_config(in);
}

inline std::string to_config_text(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  const auto& m = c.model;
  const auto& t = c.train;
  os << "image_size = " << m.image_size << "\npatch_size = " << m.patch_size << "\nchannels_in = " << m.channels_in
     << "\ndim = " << m.dim << "\ndepth = " << m.depth << "\nexpansion = " << m.expansion
     << "\nnum_classes = " << m.num_classes << "\nmixer_order = " << to_string(m.mixer_order[0]) << ", "
     << to_string(m.mixer_order[1]) << "\nouter_activation = " << (m.outer_activation ? "true" : "false")
     << "\nepochs = " << t.epochs << "\nwarmup_epochs = " << t.warmup_epochs << "\nbase_lr = " << t.base_lr
     << "\nweight_decay = " << t.weight_decay << "\nmixup_alpha = " << t.mixup_alpha
     << "\ncutmix_alpha = " << t.cutmix_alpha << "\nbatch_size = " << t.batch_size << "\nseed = " << t.seed
     << "\nbetas = " << t.beta1 << ", " << t.beta2 << "\neps = " << t.eps << "\n";
  if (t.min_lr) os << "min_lr = " << *t.min_lr << "\n";
  return os.str();
}

}  // namespace mcmlp
