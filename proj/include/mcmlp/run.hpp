#pragma once

// Training-run plumbing: manifest, per-epoch metrics CSV and the end-to-end driver
// used by `mcmlp train`.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcmlp/checkpoint.hpp"
#include "mcmlp/cifar.hpp"
#include "mcmlp/config.hpp"
#include "mcmlp/model.hpp"
#include "mcmlp/training.hpp"
#include "mcmlp/version.hpp"

namespace mcmlp {

inline constexpr const char* kMetricsHeader = "epoch,train_loss,lr,val_top1,seconds";

struct MetricsRow {
  std::size_t epoch = 0;
  double train_loss = 0;
  double lr = 0;
  double val_top1 = 0;
  double seconds = 0;
};

inline std::string format_metrics_row(const MetricsRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.6f,%.8g,%.4f,%.3f", r.epoch, r.train_loss, r.lr, r.val_top1, r.seconds);
  return buf;
}

// Append-only CSV; the header is written when the file is created.
class MetricsCsv {
 public:
  explicit MetricsCsv(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) {
      std::ofstream out(path_);
      if (!out) throw FormatError("cannot create " + path_.string());
      out << kMetricsHeader << '\n';
    }
  }
  void append(const MetricsRow& r) const {
    std::ofstream out(path_, std::ios::app);
    if (!out) throw FormatError("cannot append to " + path_.string());
    out << format_metrics_row(r) << '\n';
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError(path.string() + ": bad metrics header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MetricsRow r;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf", &r.epoch, &r.train_loss, &r.lr, &r.val_top1, &r.seconds) != 5) {
      throw FormatError(path.string() + ": malformed row '" + line + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

struct RunManifest {
  RunConfig config;
  std::uint64_t seed = 0;
  std::string code_version = kVersionString;
  std::string start_timestamp;
  std::string metrics_path;
  ChannelStats normalization;
  std::optional<std::size_t> subset;
  std::string precision = "float32";
  int threads = 1;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["config"] = to_config_text(config);
    j["seed"] = seed;
    j["code_version"] = code_version;
    j["start_timestamp"] = start_timestamp;
    j["metrics_path"] = metrics_path;
    j["normalization"] = {{"mean", normalization.mean}, {"std", normalization.std}};
    j["subset"] = subset ? nlohmann::json(*subset) : nlohmann::json(nullptr);
    j["precision"] = precision;
    j["threads"] = threads;
    j["layer_norm_eps"] = kLayerNormEps;
    j["min_lr"] = config.train.effective_min_lr();
    j["hadamard_scale"] = "1/(N*C)";
    j["params"] = count_params(config.model);
    j["macs"] = count_macs(config.model);
    return j;
  }
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct TrainRunOptions {
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::optional<std::size_t> subset;
};

struct TrainRunSummary {
  double best_val_top1 = 0;
  double last_val_top1 = 0;
  std::vector<MetricsRow> rows;
};

inline std::filesystem::path cifar_train_file(const std::filesystem::path& dir) { return dir / "train.bin"; }
inline std::filesystem::path cifar_test_file(const std::filesystem::path& dir) { return dir / "test.bin"; }

// Loads train/test splits and normalizes both with statistics of the full training split.
inline std::pair<Dataset, Dataset> load_cifar_splits(const std::filesystem::path& dir, ChannelStats* stats_out = nullptr) {
  const auto train = load_cifar100(cifar_train_file(dir));
  const auto test = load_cifar100(cifar_test_file(dir));
  const auto stats = channel_stats(train);
  if (stats_out) *stats_out = stats;
  return {to_dataset(train, stats), to_dataset(test, stats)};
}

inline TrainRunSummary run_training(const RunConfig& cfg, const TrainRunOptions& opts, std::ostream& log) {
  cfg.model.validate();
  cfg.train.validate();
  ChannelStats stats;
  auto [train, test] = load_cifar_splits(opts.data_dir, &stats);
  if (opts.subset) {
    const auto idx = stratified_subset(train.labels, *opts.subset, cfg.train.seed, cfg.model.num_classes);
    train = select(train, idx);
  }
  std::filesystem::create_directories(opts.out_dir);

  RunManifest manifest;
  manifest.config = cfg;
  manifest.seed = cfg.train.seed;
  manifest.start_timestamp = utc_timestamp();
  manifest.metrics_path = (opts.out_dir / "metrics.csv").string();
  manifest.normalization = stats;
  manifest.subset = opts.subset;
  {
    std::ofstream out(opts.out_dir / "manifest.json");
    if (!out) throw FormatError("cannot write manifest in " + opts.out_dir.string());
    out << manifest.to_json().dump(2) << '\n';
  }
  std::filesystem::remove(opts.out_dir / "metrics.csv");
  MetricsCsv csv(opts.out_dir / "metrics.csv");

  const Model<float> model = init_model<float>(cfg.model, cfg.train.seed);
  AdamWState<float> state;
  TrainRunSummary summary;
  summary.best_val_top1 = -1;
  for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    const EpochMetrics m = train_epoch(model, train, state, cfg.train, epoch);
    const double val = evaluate_top1(model, test);
    MetricsRow row{epoch, m.mean_loss, m.lr, val, m.seconds};
    csv.append(row);
    summary.rows.push_back(row);
    save_checkpoint(model, &state, opts.out_dir / "last.mcml");
    if (val > summary.best_val_top1) {
      summary.best_val_top1 = val;
      save_checkpoint(model, &state, opts.out_dir / "best.mcml");
    }
    summary.last_val_top1 = val;
    log << format_metrics_row(row) << std::endl;
  }
  return summary;
}

}  // namespace mcmlp
