#include <gtest/gtest.h>

#include <cmath>

#include "fffkit/train.hpp"

using namespace fffkit;

namespace {

DatasetSplits two_blobs(std::uint64_t seed) {
  Rng rng(seed);
  Dataset full = make_two_blobs(400, 0.5, rng);
  auto [tr, va] = split_train_validation(full, seed);
  return {tr, va, make_two_blobs(200, 0.5, rng)};
}

DatasetSplits xor_task(std::uint64_t seed) {
  Rng rng(seed);
  Dataset full = make_xor_quadrants(2000, 0.35, rng);
  auto [tr, va] = split_train_validation(full, seed);
  return {tr, va, make_xor_quadrants(2000, 0.35, rng)};
}

FffModel xor_fff(double h, std::uint64_t seed) {
  FffConfig cfg;
  cfg.dim_in = 2;
  cfg.dim_out = 2;
  cfg.depth = 1;
  cfg.leaf_size = 4;
  cfg.hardening_coeff = h;
  Rng rng(seed);
  return {cfg, fff_init(cfg, rng)};
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.early_stop_patience = epochs;
  c.batch_size = 64;
  return c;
}

}  // namespace

TEST(CrossEntropy, MatchesDefinitionAndGradient) {
  Matrix z{{1, 2, 0.5}, {-1, 0, 3}};
  std::vector<std::uint32_t> y{1, 0};
  auto ce = softmax_cross_entropy(z, y);
  double expected = 0;
  for (std::size_t b = 0; b < 2; ++b) {
    double s = 0;
    for (double v : z.row(b)) s += std::exp(v);
    expected += std::log(s) - z(b, y[b]);
  }
  EXPECT_NEAR(ce.loss, expected / 2, 1e-15);
  for (std::size_t i = 0; i < z.size(); ++i) {
    Matrix zp = z, zm = z;
    zp.values()[i] += 1e-6;
    zm.values()[i] -= 1e-6;
    const double num = (softmax_cross_entropy(zp, y).loss - softmax_cross_entropy(zm, y).loss) / 2e-6;
    EXPECT_NEAR(ce.logit_grad.values()[i], num, 1e-9);
  }
  Matrix big{{1000, -1000}};
  std::vector<std::uint32_t> y0{1};
  EXPECT_NEAR(softmax_cross_entropy(big, y0).loss, 2000, 1e-9);
  std::vector<std::uint32_t> bad{2};
  EXPECT_THROW(softmax_cross_entropy(Matrix{{0, 0}}, bad), DimensionError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.early_stop_patience = c.max_epochs + 1;
  EXPECT_THROW(c.validate(), ContractError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(Evaluate, PerfectMemorizerAndConstantModel) {
  // One-hot inputs routed straight to their label.
  Dataset d;
  d.features = Matrix(10, 10);
  d.num_classes = 10;
  for (std::size_t i = 0; i < 10; ++i) {
    d.features(i, i) = 1;
    d.labels.push_back(static_cast<std::uint32_t>((i * 3) % 10));
  }
  FfConfig cfg{10, 10, 10, Activation::relu};
  FeedForward ff = ff_zeros(cfg);
  for (std::size_t i = 0; i < 10; ++i) {
    ff.in_w(i, i) = 1;
    ff.out_w(i, d.labels[i]) = 1;
  }
  Model memorizer = FfModel{cfg, ff};
  EXPECT_EQ(evaluate(memorizer, d, EvalMode::infer_forward), 100.0);

  Model constant = FfModel{cfg, ff_zeros(cfg)};
  Dataset balanced;
  balanced.features = Matrix(100, 10);
  balanced.num_classes = 10;
  for (std::size_t i = 0; i < 100; ++i) balanced.labels.push_back(static_cast<std::uint32_t>(i % 10));
  EXPECT_NEAR(evaluate(constant, balanced, EvalMode::infer_forward), 10.0, 1e-12);
}

TEST(Train, SeparableBlobsAreMemorized) {
  auto data = two_blobs(1);
  FfConfig cfg{2, 4, 2, Activation::relu};
  Rng rng(1);
  TrainConfig tc = quick(200);
  tc.stop_on = StopOn::training;
  auto report = train(FfModel{cfg, ff_init(cfg, rng)}, data, tc);
  EXPECT_EQ(report.best_M_A, 100.0);
  EXPECT_LE(report.ett_MA, 200u);
}

TEST(Train, DeterministicForAFixedSeed) {
  auto data = xor_task(2);
  FffModel m = xor_fff(3.0, 2);
  TrainConfig tc = quick(15);
  tc.seed = 9;
  auto a = train(m, data, tc);
  auto b = train(m, data, tc);
  EXPECT_EQ(a.best_M_A, b.best_M_A);
  EXPECT_EQ(a.best_G_A, b.best_G_A);
  EXPECT_EQ(a.ett_GA, b.ett_GA);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
  EXPECT_EQ(a.best_model, b.best_model);
}

TEST(Train, BookkeepingIsMonotoneAndEttIsFirstAttainment) {
  auto data = xor_task(3);
  TrainConfig tc = quick(25);
  auto r = train(xor_fff(1.0, 3), data, tc);
  ASSERT_EQ(r.history.size(), r.epochs_run);
  double best_train = -1, best_val = -1;
  std::size_t ett_ma = 0, ett_ga = 0;
  for (const auto& e : r.history) {
    EXPECT_GE(e.train_accuracy, 0.0);
    EXPECT_LE(e.validation_accuracy, 100.0);
    if (e.train_accuracy > best_train) {
      best_train = e.train_accuracy;
      ett_ma = e.epoch;
    }
    if (e.validation_accuracy > best_val) {
      best_val = e.validation_accuracy;
      ett_ga = e.epoch;
    }
  }
  EXPECT_EQ(r.best_M_A, best_train);
  EXPECT_EQ(r.best_validation, best_val);
  EXPECT_EQ(r.ett_MA, ett_ma);
  EXPECT_EQ(r.ett_GA, ett_ga);
  EXPECT_EQ(evaluate(r.best_model, data.validation, EvalMode::infer_forward), r.best_validation);
  EXPECT_EQ(evaluate(r.best_model, data.test, EvalMode::infer_forward), r.best_G_A);
}

TEST(Train, EarlyStoppingHonoursPatience) {
  auto data = two_blobs(4);
  FfConfig cfg{2, 4, 2, Activation::relu};
  Rng rng(4);
  TrainConfig tc;
  tc.max_epochs = 100;
  tc.early_stop_patience = 3;
  tc.batch_size = 32;
  auto r = train(FfModel{cfg, ff_init(cfg, rng)}, data, tc);
  EXPECT_EQ(r.epochs_run, r.ett_GA + 3);
}

TEST(Train, LearningRateHalvingOnPlateau) {
  auto data = two_blobs(5);
  FfConfig cfg{2, 4, 2, Activation::relu};
  Rng rng(5);
  TrainConfig tc = quick(30);
  tc.lr_halving_patience = 2;
  auto r = train(FfModel{cfg, ff_init(cfg, rng)}, data, tc);
  EXPECT_LT(r.history.back().learning_rate, tc.optimizer.learning_rate);
}

TEST(Train, HardeningDrivesEntropyDown) {
  auto data = xor_task(6);
  auto r = train(xor_fff(3.0, 6), data, quick(40));
  ASSERT_EQ(r.entropy_log.size(), r.epochs_run);
  EXPECT_LT(r.entropy_log.back().overall_mean, r.entropy_log.front().overall_mean);
  EXPECT_GE(r.best_G_A, 95.0);
}

TEST(Train, MoeAndFfRun) {
  auto data = xor_task(7);
  MoeConfig mc;
  mc.dim_in = 2;
  mc.dim_out = 2;
  mc.num_experts = 4;
  mc.expert_width = 4;
  mc.k = 2;
  Rng rng(7);
  auto r = train(MoeModel{moe_init(mc, rng)}, data, quick(20));
  EXPECT_GT(r.best_G_A, 80.0);
  EXPECT_TRUE(r.entropy_log.empty());
}

TEST(Train, DivergenceIsReported) {
  auto data = xor_task(8);
  FfConfig cfg{2, 8, 2, Activation::relu};
  Rng rng(8);
  TrainConfig tc = quick(20);
  tc.optimizer.learning_rate = 1e200;
  try {
    train(FfModel{cfg, ff_init(cfg, rng)}, data, tc);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Train, DimensionMismatchIsRejected) {
  auto data = xor_task(9);
  FfConfig cfg{3, 4, 2, Activation::relu};
  Rng rng(9);
  EXPECT_THROW(train(FfModel{cfg, ff_init(cfg, rng)}, data, quick(2)), DimensionError);
}
