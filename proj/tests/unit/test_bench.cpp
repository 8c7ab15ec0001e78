#include <gtest/gtest.h>

#include <sstream>

#include "fffkit/bench.hpp"
#include "fffkit/reporting.hpp"

using namespace fffkit;

namespace {

BenchSpec small_spec() {
  BenchSpec s;
  s.dim_in = 24;
  s.dim_out = 12;
  s.batch = 8;
  s.repeats = 5;
  s.warmup = 1;
  s.block_width = 4;
  s.sweep = {1, 2, 3};
  s.ff_max_exponent = 2;
  return s;
}

}  // namespace

TEST(BenchSpec, Validation) {
  BenchSpec s = small_spec();
  EXPECT_NO_THROW(s.validate());
  s.warmup = s.repeats;
  EXPECT_THROW(s.validate(), ContractError);
  s = small_spec();
  s.repeats = 0;
  s.warmup = 0;
  EXPECT_THROW(s.validate(), ContractError);
}

TEST(Bench, SingleRepeatHasZeroStd) {
  BenchSpec s = small_spec();
  s.repeats = 1;
  s.warmup = 0;
  Rng rng(1);
  Model m = bench_fff(s, 2, rng);
  auto t = time_inference(m, s, rng);
  EXPECT_EQ(t.timed, 1u);
  EXPECT_EQ(t.std_us, 0.0);
  EXPECT_GT(t.mean_us, 0.0);
  EXPECT_EQ(t.median_of_means_us, t.mean_us);
}

TEST(Bench, IdenticalModelsHaveEqualMacs) {
  BenchSpec s = small_spec();
  Rng a(2), b(2);
  Model m1 = bench_ff(s, 2, a), m2 = bench_ff(s, 2, b);
  Rng r1(3), r2(3);
  auto row1 = bench_model(m1, s, r1), row2 = bench_model(m2, s, r2);
  EXPECT_EQ(row1.macs, row2.macs);
  EXPECT_EQ(row1.macs, row1.instrumented_macs);
  EXPECT_EQ(row1.training_width, 16u);
}

TEST(Bench, ClosedFormMacsEqualInstrumentedCounts) {
  BenchSpec s = small_spec();
  Rng rng(4);
  for (std::size_t d = 0; d <= 6; ++d) {
    for (auto make : {bench_moe, bench_fff}) {
      Model m = make(s, d, rng);
      Matrix x = gaussian_noise(rng, s.batch, s.dim_in);
      EXPECT_EQ(inference_macs(m, s.batch), instrumented_inference_macs(m, x)) << "d=" << d;
    }
  }
}

TEST(Bench, MoeGatesAreRandomizedSoExpertsVary) {
  BenchSpec s = small_spec();
  Rng rng(5);
  Model m = bench_moe(s, 3, rng);
  const auto& p = std::get<MoeModel>(m).params;
  double nonzero = 0;
  for (double w : p.gate_weights.values()) nonzero += w != 0.0;
  EXPECT_EQ(nonzero, static_cast<double>(p.gate_weights.size()));
}

TEST(Bench, SweepRowsAndSpeedups) {
  BenchSpec s = small_spec();
  BenchReport rows = sweep(s);
  // ff only up to exponent 2: 2 + 3 + 3 rows.
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[0].model_kind, "ff");
  EXPECT_EQ(rows[1].model_kind, "moe");
  EXPECT_EQ(rows[1].depth_or_experts, 2u);
  EXPECT_EQ(rows[2].model_kind, "fff");
  EXPECT_EQ(rows[2].inference_size, 1u + 4);
  EXPECT_EQ(rows[1].inference_size, 1u * 4 + 2);
  for (const auto& r : rows) {
    EXPECT_GT(r.timing.mean_us, 0.0);
    EXPECT_EQ(r.macs, r.instrumented_macs);
    EXPECT_EQ(r.speedup.has_value(), r.depth_or_experts <= 2 || (r.model_kind == "moe" && r.depth_or_experts <= 4));
  }
  EXPECT_DOUBLE_EQ(*rows[0].speedup, 1.0);
  EXPECT_FALSE(rows.back().speedup.has_value());

  std::ostringstream csv;
  write_bench_csv(rows, csv);
  std::size_t lines = 0;
  std::string line;
  std::istringstream in(csv.str());
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, rows.size() + 1);
}

// Speedup over the equal-width FF at d >= 3 (dims 768, batch 64).
TEST(Bench, FffBeatsEqualWidthFeedforwardFromDepthThree) {
  BenchSpec s;
  s.batch = 64;
  s.repeats = 6;
  s.warmup = 1;
  s.sweep = {3, 4};
  s.ff_max_exponent = 4;
  ASSERT_TRUE(pin_current_thread() || true);
  for (const auto& r : sweep(s)) {
    if (r.model_kind == "fff") {
      ASSERT_TRUE(r.speedup.has_value());
      EXPECT_GE(*r.speedup, 1.0) << "depth " << r.depth_or_experts;
    }
  }
}
