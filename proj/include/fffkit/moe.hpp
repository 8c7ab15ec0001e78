#pragma once

// Noisy top-k mixture of experts.
//
// Gate logits per sample:
//   H = x * W_gate + eps * softplus(x * W_noise),   eps ~ N(0, 1)
// The k largest entries of H are kept (ties: lower expert index wins), the
// gates are their softmax and the output is sum_i gate_i * expert_i(x).
//
// Balancing losses, each w * CV(v)^2 with CV = population std / mean:
//   importance_i = sum over the batch of gate_i
//   load_i       = sum over the batch of Phi((clean_i - thr_i) / sigma_i),
// where thr_i is the k-th largest noisy logit among the other experts: the
// smooth probability that expert i stays in the top k under fresh noise on
// its own logit.

#include <cstdint>
#include <span>
#include <vector>

#include "fffkit/feedforward.hpp"
#include "fffkit/rng.hpp"
#include "fffkit/simd/kernels.hpp"
#include "fffkit/tensor.hpp"

namespace fffkit {

struct MoeConfig {
  std::size_t dim_in = 0;
  std::size_t dim_out = 0;
  std::size_t num_experts = 1;   // g
  std::size_t expert_width = 1;  // e
  std::size_t k = 2;
  double w_importance = 0.1;
  double w_load = 0.1;
  Activation activation = Activation::relu;

  void validate() const;
  friend bool operator==(const MoeConfig&, const MoeConfig&) = default;
};

struct MoeParams {
  std::vector<FeedForward> experts;
  Matrix gate_weights;   // dim_in x g
  Matrix noise_weights;  // dim_in x g
  std::size_t k = 2;
  double w_importance = 0.1;
  double w_load = 0.1;

  std::size_t num_experts() const noexcept { return experts.size(); }
  std::size_t dim_in() const noexcept { return gate_weights.rows(); }
  std::size_t dim_out() const noexcept { return experts.empty() ? 0 : experts.front().dim_out(); }
  std::size_t expert_width() const noexcept { return experts.empty() ? 0 : experts.front().width(); }
  MoeConfig config() const;

  friend bool operator==(const MoeParams&, const MoeParams&) = default;
};

using MoeGradients = MoeParams;

MoeParams moe_zeros(const MoeConfig& cfg);
// Experts as ff_init, then gate and noise weights; both gate matrices start at
// zero so the initial routing is driven by the noise alone.
MoeParams moe_init(const MoeConfig& cfg, Rng& rng);

std::vector<std::span<double>> parameter_views(MoeParams& p);
std::vector<std::span<const double>> parameter_views(const MoeParams& p);

// Indices of the k largest values, largest first; equal values keep the
// lower index first.
std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k);

struct MoeGateTrace {
  std::size_t batch_rows = 0;
  std::size_t k = 0;
  Matrix clean_logits;  // B x g
  Matrix noise_logits;  // B x g, x * W_noise
  Matrix noise_std;     // softplus(noise_logits)
  Matrix noise;         // the standard-normal sample used
  Matrix noisy_logits;  // clean + noise * noise_std
  std::vector<std::vector<std::size_t>> selected;  // per sample, top k
  Matrix gates;         // B x g, zero outside the selection
  // Per expert: the batch rows that engaged it, their input and cache.
  std::vector<std::vector<std::size_t>> expert_rows;
  std::vector<Matrix> expert_inputs;
  std::vector<FfCache> expert_caches;
  std::vector<Matrix> expert_outputs;
};

struct MoeTrainOutput {
  Matrix output;
  MoeGateTrace trace;
};

// Throws ContractError when k < 2: the gate needs two engaged experts for any
// gradient to reach it.
MoeTrainOutput moe_forward_train(const MoeParams& params, const Matrix& batch, Rng& rng);
// Same, with a caller-supplied B x g noise sample.
MoeTrainOutput moe_forward_train(const MoeParams& params, const Matrix& batch,
                                 const Matrix& frozen_noise);

// Noiseless gating; any 1 <= k <= g. With k = 1 the selected expert's output
// is returned unscaled.
Matrix moe_forward_infer(const MoeParams& params, const Matrix& batch,
                         simd::MacTally* tally = nullptr);

struct MoeBalanceLosses {
  double importance_loss = 0.0;
  double load_loss = 0.0;
  std::vector<double> importance;  // per expert
  std::vector<double> load;        // per expert
  Matrix gate_grad;         // B x g, d loss / d gate value
  Matrix clean_logit_grad;  // B x g, through the load estimator
  Matrix noise_std_grad;    // B x g, through the load estimator
};

// CV(v)^2 with population std; 0 for a single entry or a zero mean.
double cv_squared(std::span<const double> values);
std::vector<double> cv_squared_gradient(std::span<const double> values);

MoeBalanceLosses moe_balance_losses(const MoeGateTrace& trace, const MoeParams& params);

// Gradients of <output_grad, output> plus the balance losses when given.
MoeGradients moe_backward(const MoeParams& params, const MoeGateTrace& trace, const Matrix& batch,
                          const Matrix& output_grad, const MoeBalanceLosses* balance = nullptr);

// batch * (dim_in * g + k * e * (dim_in + dim_out) + [k > 1] * k * dim_out)
std::uint64_t moe_flop_count_infer(const MoeConfig& cfg, std::uint64_t batch);

}  // namespace fffkit
