#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mcmlp/checks.hpp"
#include "mcmlp/cifar.hpp"
#include "mcmlp/training.hpp"

using namespace mcmlp;
using TensorD = Tensor<double>;

namespace {

TrainConfig plain_config() {
  TrainConfig c;
  c.weight_decay = 0;
  return c;
}

ParamRef<double> scalar_param(double value, double grad, bool decay = true) {
  TensorD t({1}, value, true);
  t.mutable_grad()[0] = grad;
  return {"theta", t, decay};
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.image_size = 8;
  c.patch_size = 4;
  c.dim = 8;
  c.depth = 1;
  c.expansion = 2;
  c.num_classes = 4;
  return c;
}

Dataset random_dataset(std::size_t n, std::size_t side, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset d;
  d.side = side;
  d.num_classes = classes;
  d.pixels.resize(n * 3 * side * side);
  for (auto& v : d.pixels) v = static_cast<float>(2.0 * detail::unit_uniform(rng) - 1.0);
  for (std::size_t i = 0; i < n; ++i) d.labels.push_back(static_cast<int>(i % classes));
  return d;
}

Batch<double> distinct_batch(std::size_t b, std::size_t k, std::size_t side) {
  std::vector<double> img(b * 3 * side * side);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = double(i % (3 * side * side)) + 1000.0 * double(i / (3 * side * side));
  std::vector<int> labels(b);
  for (std::size_t i = 0; i < b; ++i) labels[i] = static_cast<int>(i % k);
  return {TensorD({b, 3, side, side}, img), one_hot<double>(labels, k)};
}

std::vector<double> values(const TensorD& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(AdamW, SingleStepByHand) {
  auto p = scalar_param(1.0, 1.0);
  AdamWState<double> s;
  adamw_step<double>({p}, s, 0.1, plain_config());
  EXPECT_EQ(s.step, 1u);
  EXPECT_NEAR(p.tensor.data()[0], 1.0 - 0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(AdamW, ZeroGradientLeavesParametersUnchanged) {
  auto p = scalar_param(0.75, 0.0);
  AdamWState<double> s;
  for (int i = 0; i < 5; ++i) adamw_step<double>({p}, s, 0.1, plain_config());
  EXPECT_EQ(p.tensor.data()[0], 0.75);
  EXPECT_EQ(s.step, 5u);
}

TEST(AdamW, DecayAloneShrinksByExactFactor) {
  auto w = scalar_param(0.75, 0.0, true);
  auto b = scalar_param(0.75, 0.0, false);
  TrainConfig cfg;
  cfg.weight_decay = 0.05;
  AdamWState<double> s;
  adamw_step<double>({w, b}, s, 0.1, cfg);
  EXPECT_EQ(w.tensor.data()[0], 0.75 * (1.0 - 0.1 * 0.05));
  EXPECT_EQ(b.tensor.data()[0], 0.75);
}

TEST(AdamW, MatchesScalarAdamOracleWithoutDecay) {
  std::mt19937_64 rng(60);
  const std::size_t n = 16;
  TensorD t({n}, random_vector(n, rng), true);
  ParamRef<double> p{"w", t, true};
  std::vector<double> theta(t.data().begin(), t.data().end()), m(n, 0.0), v(n, 0.0);
  AdamWState<double> s;
  const auto cfg = plain_config();
  const double lr = 0.03;
  for (int step = 1; step <= 6; ++step) {
    const auto g = random_vector(n, rng);
    std::copy(g.begin(), g.end(), t.mutable_grad().begin());
    adamw_step<double>({p}, s, lr, cfg);
    // reference Adam, one coordinate at a time
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = 0.9 * m[i] + (1 - 0.9) * g[i];
      v[i] = 0.999 * v[i] + (1 - 0.999) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, step));
      const double vh = v[i] / (1 - std::pow(0.999, step));
      theta[i] = theta[i] - lr * mh / (std::sqrt(vh) + 1e-8);
    }
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(t.data()[i], theta[i]) << "step " << step << " coord " << i;
    for (std::size_t i = 0; i < n; ++i) ASSERT_GE(s.v[0][i], 0.0);
  }
}

TEST(AdamW, BiasCorrectedFirstStepIsLearningRate) {
  for (double g : {1e-3, 0.5, -7.0}) {
    auto p = scalar_param(2.0, g);
    AdamWState<double> s;
    adamw_step<double>({p}, s, 0.01, plain_config());
    EXPECT_NEAR(2.0 - p.tensor.data()[0], 0.01 * std::copysign(1.0, g), 1e-7) << g;
  }
}

TEST(AdamW, NonFiniteGradientAbortsWithName) {
  auto p = scalar_param(1.0, std::nan(""));
  p.name = "blocks.0.dct.w1";
  AdamWState<double> s;
  try {
    adamw_step<double>({p}, s, 0.1, plain_config());
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("blocks.0.dct.w1"), std::string::npos);
  }
  EXPECT_EQ(p.tensor.data()[0], 1.0);
  EXPECT_EQ(s.step, 0u);
}

TEST(AdamW, ModelDecaysOnlyWeightMatrices) {
  const auto m = init_model<double>(tiny_model(), 0);
  for (const auto& p : m.parameters()) EXPECT_EQ(p.decay, p.tensor.rank() == 2) << p.name;
}

TEST(LrSchedule, WarmupRampAndEndpoints) {
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.warmup_epochs = 2;
  const std::size_t spe = 5;
  EXPECT_EQ(lr_at(0, spe, cfg), 0.0);
  EXPECT_NEAR(lr_at(1, spe, cfg), 0.01 / 10, 1e-15);
  EXPECT_NEAR(lr_at(10, spe, cfg), 0.01, 1e-15);
  EXPECT_NEAR(lr_at(49, spe, cfg), cfg.effective_min_lr(), 1e-15);
  EXPECT_NEAR(cfg.effective_min_lr(), 1e-4, 1e-18);
}

TEST(LrSchedule, ContinuousAtJunctionAndMonotoneAfter) {
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.warmup_epochs = 3;
  const std::size_t spe = 40;
  const std::size_t warm = 3 * spe;
  // last warmup step is one ramp increment below base, first cosine step is base
  EXPECT_NEAR(lr_at(warm - 1, spe, cfg), cfg.base_lr * (1.0 - 1.0 / double(warm)), 1e-15);
  EXPECT_NEAR(lr_at(warm, spe, cfg), cfg.base_lr, 1e-15);
  for (std::size_t s = warm + 1; s < 20 * spe; ++s) EXPECT_LE(lr_at(s, spe, cfg), lr_at(s - 1, spe, cfg));
  for (std::size_t s = 1; s < warm; ++s) EXPECT_GT(lr_at(s, spe, cfg), lr_at(s - 1, spe, cfg));
}

TEST(LrSchedule, ExplicitMinLr) {
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.warmup_epochs = 1;
  cfg.min_lr = 0.0;
  EXPECT_EQ(lr_at(39, 10, cfg), 0.0);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  cfg.epochs = 3;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = TrainConfig{};
  cfg.base_lr = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = TrainConfig{};
  cfg.mixup_alpha = -1;
  EXPECT_THROW(cfg.validate(), ValidationError);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(Sampling, PermutationIsBijective) {
  std::mt19937_64 rng(61);
  auto p = random_permutation(100, rng);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(p[i], i);
}

TEST(Sampling, BetaMomentsAndRange) {
  std::mt19937_64 rng(62);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = sample_beta(0.4, rng);
    ASSERT_GE(x, 0.0);
    ASSERT_LE(x, 1.0);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  EXPECT_NEAR(mean, 0.5, 0.01);
  // Beta(a, a) variance = 1 / (4 (2a + 1))
  EXPECT_NEAR(var, 1.0 / (4.0 * 1.8), 0.005);
}

TEST(Mixup, LambdaOneIsIdentity) {
  auto batch = distinct_batch(4, 3, 4);
  const auto img = values(batch.images), tgt = values(batch.targets);
  const std::vector<std::size_t> partner{2, 3, 0, 1};
  mixup_apply(batch, 1.0, partner);
  EXPECT_EQ(values(batch.images), img);
  EXPECT_EQ(values(batch.targets), tgt);
}

TEST(Mixup, HalfWithMutualPairsAverages) {
  auto batch = distinct_batch(2, 2, 4);
  const auto img = values(batch.images);
  const std::vector<std::size_t> partner{1, 0};
  mixup_apply(batch, 0.5, partner);
  const std::size_t per = 48;
  for (std::size_t j = 0; j < per; ++j) {
    const double avg = 0.5 * (img[j] + img[per + j]);
    EXPECT_EQ(batch.images.data()[j], avg);
    EXPECT_EQ(batch.images.data()[per + j], avg);
  }
  for (double v : batch.targets.data()) EXPECT_EQ(v, 0.5);
}

TEST(Mixup, SoftLabelsAreDistributions) {
  std::mt19937_64 rng(63);
  for (int draw = 0; draw < 1000; ++draw) {
    auto batch = distinct_batch(6, 5, 2);
    if (draw % 2) mixup(batch, 0.2, rng);
    else cutmix(batch, 0.4, rng);
    for (std::size_t r = 0; r < 6; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < 5; ++j) {
        const double v = batch.targets.data()[r * 5 + j];
        ASSERT_GE(v, 0.0);
        s += v;
      }
      ASSERT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Mixup, SingleSampleBatchUntouched) {
  std::mt19937_64 rng(64);
  auto batch = distinct_batch(1, 3, 4);
  const auto img = values(batch.images);
  EXPECT_EQ(mixup(batch, 0.2, rng), 1.0);
  EXPECT_EQ(values(batch.images), img);
}

TEST(Cutmix, EmptyBoxIsIdentity) {
  std::mt19937_64 rng(65);
  auto batch = distinct_batch(4, 3, 8);
  const auto img = values(batch.images), tgt = values(batch.targets);
  const CutBox box = cutmix_box(8, 8, 1.0, rng);
  EXPECT_EQ(box.area(), 0u);
  const std::vector<std::size_t> partner{1, 2, 3, 0};
  EXPECT_EQ(cutmix_apply(batch, box, partner), 0.0);
  EXPECT_EQ(values(batch.images), img);
  EXPECT_EQ(values(batch.targets), tgt);
}

TEST(Cutmix, FullBoxReplacesWithPartner) {
  auto batch = distinct_batch(3, 3, 4);
  const auto img = values(batch.images), tgt = values(batch.targets);
  const std::vector<std::size_t> partner{2, 0, 1};
  EXPECT_EQ(cutmix_apply(batch, CutBox{0, 4, 0, 4}, partner), 1.0);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 48; ++j) EXPECT_EQ(batch.images.data()[i * 48 + j], img[partner[i] * 48 + j]);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(batch.targets.data()[i * 3 + j], tgt[partner[i] * 3 + j]);
  }
}

TEST(Cutmix, LabelWeightEqualsPastedPixelFraction) {
  std::mt19937_64 rng(66);
  const std::size_t side = 16;
  for (int trial = 0; trial < 200; ++trial) {
    auto batch = distinct_batch(2, 2, side);
    const auto img = values(batch.images);
    const double lambda = detail::unit_uniform(rng);
    const CutBox box = cutmix_box(side, side, lambda, rng);
    EXPECT_LE(box.y1, side);
    EXPECT_LE(box.x1, side);
    const std::vector<std::size_t> partner{1, 0};
    const double pasted = cutmix_apply(batch, box, partner);
    // count pixels (channel 0 of sample 0) that now differ from the original
    std::size_t changed = 0;
    for (std::size_t p = 0; p < side * side; ++p) changed += batch.images.data()[p] != img[p];
    EXPECT_EQ(pasted, double(changed) / double(side * side));
    EXPECT_EQ(batch.targets.data()[1], pasted);
    EXPECT_EQ(batch.targets.data()[0], 1.0 - pasted);
    // an unclipped box has area close to (1 - lambda)
    EXPECT_LE(pasted, 1.0 - lambda + 2.0 / double(side) + 1e-12);
  }
}

TEST(Augment, DisabledLeavesBatch) {
  std::mt19937_64 rng(67);
  TrainConfig cfg;
  cfg.mixup_alpha = 0;
  cfg.cutmix_alpha = 0;
  auto batch = distinct_batch(4, 3, 4);
  const auto img = values(batch.images);
  augment(batch, cfg, rng);
  EXPECT_EQ(values(batch.images), img);
}

TEST(TrainEpoch, SameSeedSameTrajectory) {
  const auto data = random_dataset(24, 8, 4, 1);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.warmup_epochs = 1;
  cfg.batch_size = 8;
  cfg.seed = 9;
  auto run = [&] {
    const auto m = init_model<double>(tiny_model(), 3);
    AdamWState<double> s;
    std::vector<double> losses;
    for (std::size_t e = 0; e < 3; ++e) losses.push_back(train_epoch(m, data, s, cfg, e).mean_loss);
    std::vector<double> params;
    for (const auto& p : m.parameters()) params.insert(params.end(), p.tensor.data().begin(), p.tensor.data().end());
    return std::pair{losses, params};
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(TrainEpoch, ZeroLearningRateKeepsLossConstant) {
  const auto data = random_dataset(16, 8, 4, 2);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.warmup_epochs = 0;
  cfg.base_lr = 0.0;
  cfg.min_lr = 0.0;
  cfg.batch_size = 16;
  const auto m = init_model<double>(tiny_model(), 4);
  const auto before = values(m.mixers[0].w1);
  AdamWState<double> s;
  const double first = train_epoch(m, data, s, cfg, 0, false).mean_loss;
  for (std::size_t e = 1; e < 4; ++e) EXPECT_NEAR(train_epoch(m, data, s, cfg, e, false).mean_loss, first, 1e-12);
  EXPECT_EQ(values(m.mixers[0].w1), before);
}

TEST(TrainEpoch, ReportsStepsAndRate) {
  const auto data = random_dataset(20, 8, 4, 3);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.warmup_epochs = 1;
  cfg.batch_size = 8;
  const auto m = init_model<float>(tiny_model(), 0);
  AdamWState<float> s;
  const auto metrics = train_epoch(m, data, s, cfg, 0);
  EXPECT_EQ(metrics.steps, 3u);
  EXPECT_EQ(s.step, 3u);
  EXPECT_NEAR(metrics.lr, lr_at(2, 3, cfg), 1e-15);
  EXPECT_TRUE(std::isfinite(metrics.mean_loss));
}

TEST(TrainEpoch, EmptyDatasetRejected) {
  Dataset empty;
  AdamWState<double> s;
  EXPECT_THROW(train_epoch(init_model<double>(tiny_model(), 0), empty, s, TrainConfig{}, 0), ValidationError);
}

TEST(TrainEpoch, NonFiniteLossAborts) {
  auto data = random_dataset(8, 8, 4, 4);
  data.pixels[5] = std::numeric_limits<float>::infinity();
  AdamWState<double> s;
  TrainConfig cfg;
  cfg.batch_size = 8;
  EXPECT_THROW(train_epoch(init_model<double>(tiny_model(), 0), data, s, cfg, 0, false), NumericalError);
}

TEST(Evaluate, ConstantPredictionOnBalancedSetIsChance) {
  auto c = tiny_model();
  c.num_classes = 100;
  const auto data = random_dataset(200, 8, 100, 5);
  auto m = init_model<double>(c, 0);
  for (auto& v : m.head.weight.mutable_data()) v = 0.0;
  m.head.bias.mutable_data()[37] = 1.0;
  EXPECT_DOUBLE_EQ(evaluate_top1(m, data, 64), 0.01);
}

TEST(Evaluate, OracleLogitsAndScaleInvariance) {
  std::mt19937_64 rng(68);
  const std::size_t k = 7, n = 50;
  std::vector<int> labels(n);
  std::vector<double> logits(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(rng() % k);
    for (std::size_t j = 0; j < k; ++j) logits[i * k + j] = 2.0 * detail::unit_uniform(rng) - 1.0;
  }
  auto perfect = logits;
  for (std::size_t i = 0; i < n; ++i) perfect[i * k + labels[i]] = 5.0;
  EXPECT_EQ(top1_from_logits<double>(perfect, k, labels), 1.0);
  const double base = top1_from_logits<double>(logits, k, labels);
  for (double s : {1e-3, 0.5, 40.0}) {
    auto scaled = logits;
    for (auto& v : scaled) v *= s;
    EXPECT_EQ(top1_from_logits<double>(scaled, k, labels), base);
  }
}

TEST(Evaluate, TiesGoToLowestIndex) {
  const std::vector<double> logits{1, 3, 3, 0, 2, 2, 2, 2};
  EXPECT_EQ(argmax_rows<double>(logits, 4), (std::vector<int>{1, 0}));
}
