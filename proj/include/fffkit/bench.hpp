#pragma once

// Inference timing and MAC accounting for FF, MoE and FFF layers.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fffkit/train.hpp"

namespace fffkit {

struct BenchSpec {
  std::size_t dim_in = 768;
  std::size_t dim_out = 768;
  std::size_t batch = 256;
  // Total forward passes per model; the first `warmup` are discarded.
  std::size_t repeats = 2000;
  std::size_t warmup = 100;
  std::size_t block_width = 32;  // FFF leaf size = MoE expert width
  // Exponents d: FFF depth d, MoE 2^d experts, FF width block_width * 2^d.
  std::vector<std::size_t> sweep{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  // Wider FF layers get too slow to time; no FF row above this exponent.
  std::size_t ff_max_exponent = 5;
  std::size_t moe_k = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BenchTiming {
  double mean_us = 0.0;
  double std_us = 0.0;  // population std over the timed passes
  double median_of_means_us = 0.0;
  std::size_t timed = 0;
};

struct BenchRow {
  std::string model_kind;  // ff | moe | fff
  std::size_t depth_or_experts = 0;  // d for ff and fff, g for moe
  std::size_t block_width = 0;
  std::uint64_t training_width = 0;
  std::uint64_t inference_size = 0;
  BenchTiming timing;
  std::uint64_t macs = 0;               // closed form, whole batch
  std::uint64_t instrumented_macs = 0;  // tallied from one counted pass
  std::optional<double> speedup;        // t_FF / t_model at equal training width

  friend bool operator==(const BenchRow&, const BenchRow&) = default;
};

using BenchReport = std::vector<BenchRow>;

// Times the inference forward pass only; a fresh input batch is drawn from
// `rng` before each pass and kept out of the measured region.
BenchTiming time_inference(const Model& model, const BenchSpec& spec, Rng& rng);

std::uint64_t inference_macs(const Model& model, std::uint64_t batch);
// Runs one forward pass on `batch` through the counting path.
std::uint64_t instrumented_inference_macs(const Model& model, const Matrix& batch);

BenchRow bench_model(const Model& model, const BenchSpec& spec, Rng& rng);

// Models built for the sweep. MoE gate weights are randomized since the
// trained-from-scratch init (all zero) would send every sample to expert 0.
Model bench_ff(const BenchSpec& spec, std::size_t exponent, Rng& rng);
Model bench_moe(const BenchSpec& spec, std::size_t exponent, Rng& rng);
Model bench_fff(const BenchSpec& spec, std::size_t exponent, Rng& rng);

// Rows ordered by exponent, then ff, moe, fff.
BenchReport sweep(const BenchSpec& spec);

// Pins the calling thread to one CPU where the platform allows.
bool pin_current_thread();

}  // namespace fffkit
