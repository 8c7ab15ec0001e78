#pragma once

// Fast feedforward layer.
//
// A depth-d balanced binary tree of node networks routes each input over
// 2^d leaf networks. Node t (level order, root 0) has children 2t+1 (left)
// and 2t+2 (right); its choice score c = sigmoid(node_t(x)) is the share of
// probability mass sent right. Leaves are numbered 0..2^d-1 left to right.
//
// forward_train mixes every leaf by its root-to-leaf path probability.
// forward_infer descends one node per level (right when c >= 1/2) and runs a
// single leaf.

#include <cstdint>
#include <span>
#include <vector>

#include "fffkit/feedforward.hpp"
#include "fffkit/rng.hpp"
#include "fffkit/simd/kernels.hpp"
#include "fffkit/tensor.hpp"

namespace fffkit {

enum class EntropyBase : std::uint8_t { bits = 0, nats = 1 };

struct FffConfig {
  std::size_t dim_in = 0;
  std::size_t dim_out = 0;
  std::size_t depth = 0;
  std::size_t node_size = 1;
  std::size_t leaf_size = 1;
  double hardening_coeff = 0.0;
  double transpose_prob = 0.05;
  EntropyBase entropy_base = EntropyBase::bits;
  Activation leaf_activation = Activation::relu;
  // Only used when node_size > 1; a single-neuron node is linear + sigmoid.
  Activation node_hidden_activation = Activation::relu;

  void validate() const;
  std::size_t num_nodes() const noexcept { return (std::size_t{1} << depth) - 1; }
  std::size_t num_leaves() const noexcept { return std::size_t{1} << depth; }
  Activation effective_node_activation() const noexcept {
    return node_size == 1 ? Activation::none : node_hidden_activation;
  }

  friend bool operator==(const FffConfig&, const FffConfig&) = default;
};

// Node nets are <dim_in, node_size, 1> blocks whose single output is the
// choice logit; leaf nets are <dim_in, leaf_size, dim_out> blocks.
struct FffParams {
  std::vector<FeedForward> nodes;
  std::vector<FeedForward> leaves;

  friend bool operator==(const FffParams&, const FffParams&) = default;
};

// Same layout as the parameters.
using FffGradients = FffParams;

FffParams fff_zeros(const FffConfig& cfg);
// Scaled-uniform fan-in init (see ff_init), node head weights further scaled
// by 0.1 so early choices sit near 1/2. Nodes are drawn before leaves.
FffParams fff_init(const FffConfig& cfg, Rng& rng);
void check_params(const FffParams& params, const FffConfig& cfg);

std::vector<std::span<double>> parameter_views(FffParams& p);
std::vector<std::span<const double>> parameter_views(const FffParams& p);
std::uint64_t fingerprint(const FffParams& p);

struct FffForwardTrace {
  std::size_t batch_rows = 0;
  std::uint64_t batch_fingerprint = 0;
  std::uint64_t params_fingerprint = 0;

  // B x num_nodes
  Matrix node_choices;    // c = sigmoid(logit), before any transposition
  Matrix node_logits;
  Matrix right_share;     // c, or 1 - c where the pair was transposed
  Matrix reach;           // probability of arriving at the node
  std::vector<std::uint8_t> transposed_mask;  // row-major B x num_nodes

  Matrix leaf_mixture;  // B x num_leaves

  std::vector<FfCache> node_caches;
  std::vector<FfCache> leaf_caches;
  std::vector<Matrix> leaf_outputs;  // each B x dim_out

  bool transposed(std::size_t sample, std::size_t node) const {
    return transposed_mask[sample * node_choices.cols() + node] != 0;
  }
};

struct FffTrainOutput {
  Matrix output;
  FffForwardTrace trace;
};

// Soft mixture over all leaves. Each (sample, node) choice pair is swapped
// with probability cfg.transpose_prob, drawn from `rng`.
FffTrainOutput forward_train(const FffParams& params, const FffConfig& cfg, const Matrix& batch,
                             Rng& rng);
// Soft mixture without transpositions (evaluation use).
FffTrainOutput forward_train(const FffParams& params, const FffConfig& cfg, const Matrix& batch);

struct FffInferOutput {
  Matrix output;
  std::vector<std::size_t> leaf_index;
};

// Hard descent. Read-only on params; safe to call from several threads.
FffInferOutput forward_infer(const FffParams& params, const FffConfig& cfg, const Matrix& batch,
                             simd::MacTally* tally = nullptr);

// Exact gradients of <output_grad, output> (+ sum of choice_grad * c when
// given) through the mixture actually used by the traced pass.
FffGradients backward(const FffParams& params, const FffConfig& cfg, const FffForwardTrace& trace,
                      const Matrix& batch, const Matrix& output_grad,
                      const Matrix* choice_grad = nullptr);

double bernoulli_entropy(double p, EntropyBase base) noexcept;

struct HardeningLoss {
  double loss = 0.0;
  Matrix choice_grad;  // B x num_nodes, d loss / d c
};

// h * (1/B) * sum over samples and nodes of H(c). The batch mean keeps h
// independent of the batch size.
HardeningLoss hardening_loss(const FffForwardTrace& trace, const FffConfig& cfg);

struct EntropySnapshot {
  std::vector<double> per_node_mean_entropy;
  double overall_mean = 0.0;
  std::size_t epoch = 0;
};

EntropySnapshot entropy_snapshot(const FffForwardTrace& trace, const FffConfig& cfg,
                                 std::size_t epoch);

// true where the node's mean entropy is strictly below the threshold.
std::vector<bool> is_hardened(const EntropySnapshot& snapshot, double threshold = 0.10);

struct FffSizes {
  std::uint64_t training_size = 0;
  std::uint64_t inference_size = 0;
  std::uint64_t training_width = 0;
  std::uint64_t inference_width = 0;
  std::uint64_t overhead_train = 0;
  std::uint64_t overhead_infer = 0;
};

FffSizes fff_sizes(const FffConfig& cfg);

// Multiply-accumulates per forward pass of `batch` samples:
//   infer: batch * (d * n * (dim_in + 1) + l * (dim_in + dim_out))
//   train: batch * ((2^d - 1) * n * (dim_in + 1) + 2^d * l * (dim_in + dim_out)
//                   + [d > 0] * 2^d * dim_out)
// The last train term is the leaf mixing; depth 0 returns the leaf output as is.
std::uint64_t flop_count_infer(const FffConfig& cfg, std::uint64_t batch);
std::uint64_t flop_count_train(const FffConfig& cfg, std::uint64_t batch);

std::uint64_t fingerprint(const Matrix& m);

}  // namespace fffkit
