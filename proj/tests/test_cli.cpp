#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mcmlp/cli.hpp"

using namespace mcmlp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("mcmlp_cli_" + std::string(::testing::UnitTest::GetInstance()
                                                                       ->current_test_info()
                                                                       ->name()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

const char* kTinyConfig = R"(# small 32x32 run
image_size = 32
patch_size = 8
dim = 16
depth = 1
expansion = 2
num_classes = 100
epochs = 2
warmup_epochs = 1
batch_size = 32
seed = 3
)";

}  // namespace

TEST(Cli, ParamsOnToyConfig) {
  TempDir dir;
  write_text(dir.path / "toy.cfg", "dim = 64\ndepth = 2\n");
  const auto r = run({"params", "--config", (dir.path / "toy.cfg").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "params: 159140\nmacs: 9836800\n");
  EXPECT_EQ(run({"params", "--config", (dir.path / "toy.cfg").string()}).out, r.out);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"params"}).code, kExitUsage);
  EXPECT_EQ(run({"params", "--config", "/nonexistent.cfg"}).code, kExitUsage);
  EXPECT_EQ(run({"bench", "--op", "fft", "--sizes", "64"}).code, kExitUsage);
  EXPECT_EQ(run({"bench", "--op", "dct", "--sizes", "48"}).code, kExitUsage);
  EXPECT_EQ(run({"check-transforms", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(run({"eval", "--checkpoint", "/nonexistent.mcml", "--data", "/tmp"}).code, kExitUsage);
}

TEST(Cli, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("check-transforms"), std::string::npos);
}

TEST(Cli, ConfigErrorsMapToExitCodes) {
  TempDir dir;
  write_text(dir.path / "typo.cfg", "dimm = 64\n");
  EXPECT_EQ(run({"params", "--config", (dir.path / "typo.cfg").string()}).code, kExitData);
  write_text(dir.path / "bad.cfg", "dim = 48\n");
  const auto r = run({"params", "--config", (dir.path / "bad.cfg").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("power of 2"), std::string::npos) << r.err;
}

TEST(Cli, CheckTransformsPasses) {
  const auto r = run({"check-transforms", "--sizes", "2..64", "--trials", "50", "--max-2d", "16"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("all checks passed"), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("dct"), std::string::npos);
}

TEST(Cli, BenchPrintsSizesAndRatios) {
  const auto r = run({"bench", "--op", "fwht", "--sizes", "64,128", "--trials", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string header, a, b;
  std::getline(in, header);
  std::getline(in, a);
  std::getline(in, b);
  EXPECT_EQ(header, "size,nanoseconds,ratio");
  EXPECT_EQ(a.rfind("64,", 0), 0u);
  EXPECT_EQ(a.back(), ',');
  EXPECT_EQ(b.rfind("128,", 0), 0u);
  double ns = 0, ratio = 0;
  EXPECT_EQ(std::sscanf(b.c_str(), "128,%lf,%lf", &ns, &ratio), 2);
  EXPECT_GT(ns, 0);
  EXPECT_GT(ratio, 0);
}

TEST(Cli, SizeListParsing) {
  EXPECT_EQ(parse_size_list("2..16"), (std::vector<std::size_t>{2, 4, 8, 16}));
  EXPECT_EQ(parse_size_list("4096,8192"), (std::vector<std::size_t>{4096, 8192}));
  EXPECT_THROW(parse_size_list("3..16"), ValidationError);
  EXPECT_THROW(parse_size_list("16..2"), ValidationError);
}

TEST(Cli, TrainThenEval) {
  TempDir dir;
  save_cifar100(dir.path / "train.bin", synthetic_cifar100(300, 1));
  save_cifar100(dir.path / "test.bin", synthetic_cifar100(100, 2));
  write_text(dir.path / "tiny.cfg", kTinyConfig);
  const auto out = dir.path / "run";
  const auto r = run({"train", "--config", (dir.path / "tiny.cfg").string(), "--data", dir.path.string(), "--out",
                      out.string(), "--subset", "200"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind(std::string(kMetricsHeader) + "\n", 0), 0u);
  EXPECT_NE(r.out.find("best val top-1:"), std::string::npos);
  EXPECT_EQ(read_metrics_csv(out / "metrics.csv").size(), 2u);

  const auto e = run({"eval", "--checkpoint", (out / "best.mcml").string(), "--data", dir.path.string()});
  ASSERT_EQ(e.code, 0) << e.err;
  double pct = -1;
  ASSERT_EQ(std::sscanf(e.out.c_str(), "top-1: %lf%%", &pct), 1) << e.out;
  EXPECT_GE(pct, 0.0);
  EXPECT_LE(pct, 100.0);
}

TEST(Cli, SameSeedGivesSameMetrics) {
  TempDir dir;
  save_cifar100(dir.path / "train.bin", synthetic_cifar100(200, 3));
  save_cifar100(dir.path / "test.bin", synthetic_cifar100(100, 4));
  write_text(dir.path / "tiny.cfg", kTinyConfig);
  auto once = [&](const std::string& name) {
    const auto r = run({"train", "--config", (dir.path / "tiny.cfg").string(), "--data", dir.path.string(), "--out",
                        (dir.path / name).string(), "--seed", "11", "--epochs", "3"});
    EXPECT_EQ(r.code, 0) << r.err;
    return read_metrics_csv(dir.path / name / "metrics.csv");
  };
  const auto a = once("a"), b = once("b");
  ASSERT_EQ(a.size(), 3u);
  ASSERT_EQ(b.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].train_loss, b[i].train_loss);
    EXPECT_EQ(a[i].lr, b[i].lr);
    EXPECT_EQ(a[i].val_top1, b[i].val_top1);
  }
}

TEST(Cli, EvalOfUntrainedModelIsChance) {
  TempDir dir;
  save_cifar100(dir.path / "train.bin", synthetic_cifar100(500, 5));
  save_cifar100(dir.path / "test.bin", synthetic_cifar100(5000, 6));
  ModelConfig c;
  c.patch_size = 8;
  c.dim = 16;
  c.depth = 1;
  c.expansion = 2;
  save_checkpoint<float>(init_model<float>(c, 21), nullptr, dir.path / "init.mcml");
  const auto e = run({"eval", "--checkpoint", (dir.path / "init.mcml").string(), "--data", dir.path.string()});
  ASSERT_EQ(e.code, 0) << e.err;
  double pct = -1;
  ASSERT_EQ(std::sscanf(e.out.c_str(), "top-1: %lf%%", &pct), 1) << e.out;
  EXPECT_NEAR(pct, 1.0, 0.5);
}

TEST(Cli, DataErrorsExitTwo) {
  TempDir dir;
  save_cifar100(dir.path / "train.bin", synthetic_cifar100(10, 1));
  {
    std::ofstream out(dir.path / "test.bin", std::ios::binary);
    out << "short";
  }
  write_text(dir.path / "tiny.cfg", kTinyConfig);
  const auto r = run({"train", "--config", (dir.path / "tiny.cfg").string(), "--data", dir.path.string(), "--out",
                      (dir.path / "run").string()});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("3074"), std::string::npos) << r.err;

  write_text(dir.path / "junk.mcml", "not a checkpoint at all");
  save_cifar100(dir.path / "test.bin", synthetic_cifar100(10, 2));
  EXPECT_EQ(run({"eval", "--checkpoint", (dir.path / "junk.mcml").string(), "--data", dir.path.string()}).code,
            kExitData);
}

TEST(Cli, MissingSplitFilesAreUsageErrors) {
  TempDir dir;
  write_text(dir.path / "tiny.cfg", kTinyConfig);
  const auto r = run({"train", "--config", (dir.path / "tiny.cfg").string(), "--data", dir.path.string(), "--out",
                      (dir.path / "run").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("train.bin"), std::string::npos);
}
