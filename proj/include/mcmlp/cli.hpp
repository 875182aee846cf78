#pragma once

// Command-line front end: train / eval / check-transforms / bench / params.
// Exit codes: 0 success, 1 usage, 2 data/format error, 3 numerical failure,
// 4 internal invariant violation.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mcmlp/checkpoint.hpp"
#include "mcmlp/checks.hpp"
#include "mcmlp/config.hpp"
#include "mcmlp/model.hpp"
#include "mcmlp/oracles.hpp"
#include "mcmlp/run.hpp"
#include "mcmlp/training.hpp"
#include "mcmlp/transforms.hpp"

namespace mcmlp {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3, kExitInternal = 4 };

// "2..1024" (powers of two between the bounds) or "4096,8192,16384".
inline std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  if (auto dots = text.find(".."); dots != std::string::npos) {
    const std::size_t lo = std::stoul(text.substr(0, dots));
    const std::size_t hi = std::stoul(text.substr(dots + 2));
    if (!is_power_of_two(lo) || !is_power_of_two(hi) || lo > hi) {
      throw ValidationError("size range " + text + " must have power-of-2 bounds lo <= hi");
    }
    for (std::size_t n = lo; n <= hi; n *= 2) out.push_back(n);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::size_t n = std::stoul(item);
    require_power_of_two(n, "size");
    out.push_back(n);
  }
  if (out.empty()) throw ValidationError("empty size list");
  return out;
}

struct BenchPoint {
  std::size_t size = 0;
  double nanoseconds = 0;  // median time of one transform
};

// Median-of-trials wall time per transform. Each trial visits every size once (round-robin)
// so slow periods on a shared machine hit all sizes alike; a trial repeats the transform
// enough times to cover roughly 2^22 element-operations.
inline std::vector<BenchPoint> bench_transform(const std::string& op, const std::vector<std::size_t>& sizes,
                                               std::size_t trials, bool naive) {
  std::mt19937_64 rng(42);
  std::vector<std::vector<double>> inputs, samples(sizes.size());
  std::vector<std::size_t> reps;
  for (auto n : sizes) {
    inputs.push_back(random_vector(n, rng));
    const double work = naive ? double(n) * double(n) : double(n) * double(log2_exact(n) + 1);
    reps.push_back(std::max<std::size_t>(1, static_cast<std::size_t>((1u << 22) / work)));
    DctPlan<double>::shared(n);
  }
  volatile double sink = 0;
  std::vector<double> buf;
  for (std::size_t t = 0; t < trials; ++t) {
    for (std::size_t s = 0; s < sizes.size(); ++s) {
      const auto& x = inputs[s];
      const auto& plan = DctPlan<double>::shared(sizes[s]);
      buf.resize(x.size());
      const auto start = std::chrono::steady_clock::now();
      for (std::size_t r = 0; r < reps[s]; ++r) {
        if (op == "dct") {
          if (naive) {
            sink = sink + dct1d_naive<double>(x)[0];
          } else {
            std::copy(x.begin(), x.end(), buf.begin());
            plan.forward(buf);
            sink = sink + buf[0];
          }
        } else {
          if (naive) {
            sink = sink + oracle::hadamard_apply_direct(x)[0];
          } else {
            std::copy(x.begin(), x.end(), buf.begin());
            fwht<double>(buf);
            sink = sink + buf[0];
          }
        }
      }
      const double ns = std::chrono::duration<double, std::nano>(std::chrono::steady_clock::now() - start).count();
      samples[s].push_back(ns / double(reps[s]));
    }
  }
  std::vector<BenchPoint> out;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    auto& v = samples[s];
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    out.push_back({sizes[s], v[v.size() / 2]});
  }
  return out;
}

inline void print_report(const CheckReport& report, std::ostream& out) {
  for (const auto& l : report.lines) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-60s %.3e  (tol %.1e)  %s", l.name.c_str(), l.value, l.tolerance,
                  l.pass() ? "ok" : "FAIL");
    out << buf << '\n';
  }
}

inline int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MC-MLP: multi-coordinate-frame MLP vision backbone", "mcmlp"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train a model on CIFAR-100 binary files");
  std::string train_config, train_data, train_out;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::size_t> train_epochs, train_subset;
  train->add_option("--config", train_config, "key = value config file")->required()->check(CLI::ExistingFile);
  train->add_option("--data", train_data, "directory holding train.bin and test.bin")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--seed", train_seed, "override config seed");
  train->add_option("--epochs", train_epochs, "override config epochs");
  train->add_option("--subset", train_subset, "train on a seed-stratified subset of K images");

  auto* eval = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint on the test split");
  std::string eval_ckpt, eval_data;
  eval->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data, "directory holding train.bin and test.bin")->required()->check(CLI::ExistingDirectory);

  auto* check = app.add_subcommand("check-transforms", "Transform oracle, invariant and gradient suites");
  std::string check_sizes = "2..1024";
  std::size_t check_trials = 1000;
  std::size_t check_2d = 64;
  check->add_option("--sizes", check_sizes, "1D sizes, range lo..hi or comma list");
  check->add_option("--trials", check_trials, "random inputs per size");
  check->add_option("--max-2d", check_2d, "largest 2D side");

  auto* bench = app.add_subcommand("bench", "Time a fast transform across sizes");
  std::string bench_op, bench_sizes;
  std::size_t bench_trials = 20;
  bool bench_naive = false;
  bench->add_option("--op", bench_op)->required()->check(CLI::IsMember({"dct", "fwht"}));
  bench->add_option("--sizes", bench_sizes)->required();
  bench->add_option("--trials", bench_trials, "timing trials per size (median reported)");
  bench->add_flag("--naive", bench_naive, "time the O(N^2) reference instead");

  auto* params = app.add_subcommand("params", "Parameter and MAC counts of a config");
  std::string params_config;
  params->add_option("--config", params_config)->required()->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) {
      RunConfig cfg = load_run_config(train_config);
      if (train_seed) cfg.train.seed = *train_seed;
      if (train_epochs) cfg.train.epochs = *train_epochs;
      try {
        cfg.model.validate();
        cfg.train.validate();
      } catch (const ValidationError& e) {
        err << "invalid config: " << e.what() << '\n';
        return kExitUsage;
      }
      if (!std::filesystem::exists(cifar_train_file(train_data)) || !std::filesystem::exists(cifar_test_file(train_data))) {
        err << "data directory must contain train.bin and test.bin\n";
        return kExitUsage;
      }
      out << kMetricsHeader << '\n';
      const auto summary = run_training(cfg, {train_data, train_out, train_subset}, out);
      char buf[96];
      std::snprintf(buf, sizeof buf, "best val top-1: %.2f%%\n", 100.0 * summary.best_val_top1);
      out << buf;
    } else if (*eval) {
      if (!std::filesystem::exists(cifar_train_file(eval_data)) || !std::filesystem::exists(cifar_test_file(eval_data))) {
        err << "data directory must contain train.bin and test.bin\n";
        return kExitUsage;
      }
      const auto ckpt = load_checkpoint<float>(eval_ckpt);
      const auto [train_ds, test_ds] = load_cifar_splits(eval_data);
      const double acc = evaluate_top1(ckpt.model, test_ds);
      char buf[64];
      std::snprintf(buf, sizeof buf, "top-1: %.2f%%\n", 100.0 * acc);
      out << buf;
    } else if (*check) {
      const auto sizes = parse_size_list(check_sizes);
      CheckReport report = transform_oracle_checks(sizes, check_2d, check_trials);
      report.append(structural_checks(sizes, std::min<std::size_t>(check_trials, 100)));
      report.append(gradient_checks());
      print_report(report, out);
      out << (report.all_pass() ? "all checks passed\n" : "CHECKS FAILED\n");
      return report.all_pass() ? kExitOk : kExitNumerical;
    } else if (*bench) {
      const auto sizes = parse_size_list(bench_sizes);
      const auto points = bench_transform(bench_op, sizes, bench_trials, bench_naive);
      out << "size,nanoseconds,ratio\n";
      for (std::size_t i = 0; i < points.size(); ++i) {
        char buf[96];
        if (i > 0 && points[i].size == 2 * points[i - 1].size) {
          std::snprintf(buf, sizeof buf, "%zu,%.1f,%.3f\n", points[i].size, points[i].nanoseconds,
                        points[i].nanoseconds / points[i - 1].nanoseconds);
        } else {
          std::snprintf(buf, sizeof buf, "%zu,%.1f,\n", points[i].size, points[i].nanoseconds);
        }
        out << buf;
      }
    } else if (*params) {
      const RunConfig cfg = load_run_config(params_config);
      try {
        cfg.model.validate();
      } catch (const ValidationError& e) {
        err << "invalid config: " << e.what() << '\n';
        return kExitUsage;
      }
      out << "params: " << count_params(cfg.model) << '\n' << "macs: " << count_macs(cfg.model) << '\n';
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitOk;
}

inline int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace mcmlp
