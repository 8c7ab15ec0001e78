#include "fffkit/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#if defined(__linux__)
#include <sched.h>
#endif

namespace fffkit {

void BenchSpec::validate() const {
  if (repeats < 1) throw ContractError("bench repeats must be >= 1");
  if (warmup >= repeats) throw ContractError("bench warmup must be < repeats");
  if (dim_in == 0 || dim_out == 0 || batch == 0 || block_width == 0) {
    throw ContractError("bench dims, batch and block width must be >= 1");
  }
  for (std::size_t d : sweep) {
    if (d > 30) throw ContractError("bench sweep exponent above 30");
  }
}

namespace {

void run_inference(const Model& model, const Matrix& x, simd::MacTally* tally) {
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FfModel>) {
          volatile double sink = ff_forward(m.params, x)(0, 0);
          (void)sink;
        } else if constexpr (std::is_same_v<T, MoeModel>) {
          volatile double sink = moe_forward_infer(m.params, x, tally)(0, 0);
          (void)sink;
        } else {
          volatile double sink = forward_infer(m.params, m.config, x, tally).output(0, 0);
          (void)sink;
        }
      },
      model);
}

}  // namespace

BenchTiming time_inference(const Model& model, const BenchSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t dim_in = model_dim_in(model);
  std::vector<double> samples;
  samples.reserve(spec.repeats - spec.warmup);
  for (std::size_t r = 0; r < spec.repeats; ++r) {
    const Matrix x = gaussian_noise(rng, spec.batch, dim_in);
    const auto t0 = std::chrono::steady_clock::now();
    run_inference(model, x, nullptr);
    const auto t1 = std::chrono::steady_clock::now();
    if (r >= spec.warmup) samples.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
  }

  BenchTiming t;
  t.timed = samples.size();
  double sum = 0.0;
  for (double s : samples) sum += s;
  t.mean_us = sum / static_cast<double>(samples.size());
  double var = 0.0;
  for (double s : samples) var += (s - t.mean_us) * (s - t.mean_us);
  t.std_us = std::sqrt(var / static_cast<double>(samples.size()));

  const std::size_t groups = std::min<std::size_t>(5, samples.size());
  std::vector<double> means;
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t lo = gi * samples.size() / groups;
    const std::size_t hi = (gi + 1) * samples.size() / groups;
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += samples[i];
    means.push_back(s / static_cast<double>(hi - lo));
  }
  std::sort(means.begin(), means.end());
  t.median_of_means_us = groups % 2 ? means[groups / 2]
                                    : 0.5 * (means[groups / 2 - 1] + means[groups / 2]);
  return t;
}

std::uint64_t inference_macs(const Model& model, std::uint64_t batch) {
  return std::visit(
      [&](const auto& m) -> std::uint64_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FfModel>) {
          return batch * ff_macs_per_sample(m.params.dim_in(), m.params.width(), m.params.dim_out());
        } else if constexpr (std::is_same_v<T, MoeModel>) {
          return moe_flop_count_infer(m.params.config(), batch);
        } else {
          return flop_count_infer(m.config, batch);
        }
      },
      model);
}

std::uint64_t instrumented_inference_macs(const Model& model, const Matrix& batch) {
  simd::MacTally tally;
  if (const auto* ff = std::get_if<FfModel>(&model)) {
    std::vector<double> hidden(ff->params.width());
    std::vector<double> out(ff->params.dim_out());
    for (std::size_t b = 0; b < batch.rows(); ++b) {
      ff_forward_sample(ff->params, batch.row(b), hidden, out, &tally);
    }
  } else {
    run_inference(model, batch, &tally);
  }
  return tally.macs;
}

BenchRow bench_model(const Model& model, const BenchSpec& spec, Rng& rng) {
  if (model_dim_in(model) != spec.dim_in || model_dim_out(model) != spec.dim_out) {
    throw DimensionError("bench model dims do not match the bench spec");
  }
  BenchRow row;
  row.block_width = spec.block_width;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FfModel>) {
          row.model_kind = "ff";
          row.training_width = m.params.width();
          row.inference_size = m.params.width();
        } else if constexpr (std::is_same_v<T, MoeModel>) {
          row.model_kind = "moe";
          row.depth_or_experts = m.params.num_experts();
          row.block_width = m.params.expert_width();
          row.training_width = m.params.num_experts() * m.params.expert_width();
          row.inference_size = m.params.k * m.params.expert_width() + m.params.num_experts();
        } else {
          const FffSizes s = fff_sizes(m.config);
          row.model_kind = "fff";
          row.depth_or_experts = m.config.depth;
          row.block_width = m.config.leaf_size;
          row.training_width = s.training_width;
          row.inference_size = s.inference_size;
        }
      },
      model);
  row.macs = inference_macs(model, spec.batch);
  {
    Rng count_rng = rng.fork();
    row.instrumented_macs =
        instrumented_inference_macs(model, gaussian_noise(count_rng, spec.batch, spec.dim_in));
  }
  row.timing = time_inference(model, spec, rng);
  return row;
}

Model bench_ff(const BenchSpec& spec, std::size_t exponent, Rng& rng) {
  FfConfig cfg{spec.dim_in, spec.block_width << exponent, spec.dim_out, Activation::relu};
  return FfModel{cfg, ff_init(cfg, rng)};
}

Model bench_moe(const BenchSpec& spec, std::size_t exponent, Rng& rng) {
  MoeConfig cfg;
  cfg.dim_in = spec.dim_in;
  cfg.dim_out = spec.dim_out;
  cfg.num_experts = std::size_t{1} << exponent;
  cfg.expert_width = spec.block_width;
  cfg.k = spec.moe_k;
  MoeParams p = moe_init(cfg, rng);
  const double bound = std::sqrt(1.0 / static_cast<double>(spec.dim_in));
  for (double& w : p.gate_weights.values()) w = rng.uniform(-bound, bound);
  return MoeModel{std::move(p)};
}

Model bench_fff(const BenchSpec& spec, std::size_t exponent, Rng& rng) {
  FffConfig cfg;
  cfg.dim_in = spec.dim_in;
  cfg.dim_out = spec.dim_out;
  cfg.depth = exponent;
  cfg.leaf_size = spec.block_width;
  return FffModel{cfg, fff_init(cfg, rng)};
}

BenchReport sweep(const BenchSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  BenchReport rows;
  for (std::size_t d : spec.sweep) {
    std::optional<double> ff_mean;
    const std::size_t kinds = 3;
    for (std::size_t kind = 0; kind < kinds; ++kind) {
      if (kind == 0 && d > spec.ff_max_exponent) continue;
      Rng model_rng = rng.fork();
      Rng input_rng = rng.fork();
      BenchRow row;
      {
        const Model m = kind == 0   ? bench_ff(spec, d, model_rng)
                        : kind == 1 ? bench_moe(spec, d, model_rng)
                                    : bench_fff(spec, d, model_rng);
        row = bench_model(m, spec, input_rng);
      }
      if (kind == 0) {
        row.depth_or_experts = d;
        ff_mean = row.timing.mean_us;
      }
      if (ff_mean) row.speedup = *ff_mean / row.timing.mean_us;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

bool pin_current_thread() {
#if defined(__linux__)
  cpu_set_t current;
  CPU_ZERO(&current);
  if (sched_getaffinity(0, sizeof(current), &current) != 0) return false;
  int first = -1;
  for (int c = 0; c < CPU_SETSIZE; ++c) {
    if (CPU_ISSET(c, &current)) {
      first = c;
      break;
    }
  }
  if (first < 0) return false;
  cpu_set_t one;
  CPU_ZERO(&one);
  CPU_SET(first, &one);
  return sched_setaffinity(0, sizeof(one), &one) == 0;
#else
  return false;
#endif
}

}  // namespace fffkit
