#pragma once

// Training and evaluation for the three layer kinds.
//
// Bookkeeping per epoch (1-based):
//   M_A  best training-set accuracy, training forward (soft mixture for FFF)
//   val  validation accuracy, inference forward (hard descent for FFF)
//   G_A  test accuracy of the best-validation snapshot, inference forward
// ETT is the first epoch at which the reported value was reached.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fffkit/dataset.hpp"
#include "fffkit/feedforward.hpp"
#include "fffkit/fff.hpp"
#include "fffkit/moe.hpp"
#include "fffkit/optimizer.hpp"

namespace fffkit {

enum class LayerKind : std::uint8_t { ff = 0, moe = 1, fff = 2 };

std::string_view layer_kind_name(LayerKind k);
bool parse_layer_kind(std::string_view name, LayerKind& out);

struct FfModel {
  FfConfig config;
  FeedForward params;
  friend bool operator==(const FfModel&, const FfModel&) = default;
};

struct MoeModel {
  MoeParams params;
  friend bool operator==(const MoeModel&, const MoeModel&) = default;
};

struct FffModel {
  FffConfig config;
  FffParams params;
  friend bool operator==(const FffModel&, const FffModel&) = default;
};

using Model = std::variant<FfModel, MoeModel, FffModel>;

LayerKind kind_of(const Model& m);
std::size_t model_dim_in(const Model& m);
std::size_t model_dim_out(const Model& m);

enum class EvalMode { train_forward, infer_forward };

// Logits for a batch. MoE and FF have a single (noiseless) forward; the mode
// only matters for FFF.
Matrix predict_logits(const Model& model, const Matrix& batch, EvalMode mode);
// Percentage of samples whose argmax logit equals the label (ties: lowest class).
double evaluate(const Model& model, const Dataset& data, EvalMode mode);

struct SoftmaxCrossEntropy {
  double loss = 0.0;  // batch mean
  Matrix logit_grad;  // d loss / d logits
};

SoftmaxCrossEntropy softmax_cross_entropy(const Matrix& logits,
                                          std::span<const std::uint32_t> labels);

enum class StopOn : std::uint8_t { validation = 0, training = 1 };

struct TrainConfig {
  OptimizerConfig optimizer{};
  std::size_t batch_size = 256;
  std::size_t max_epochs = 100;
  // Stop after this many epochs without improvement in the `stop_on` accuracy.
  std::size_t early_stop_patience = 20;
  // Halve the learning rate after this many epochs without a training
  // accuracy improvement; 0 disables.
  std::size_t lr_halving_patience = 0;
  StopOn stop_on = StopOn::validation;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;
  double learning_rate = 0.0;
};

struct TrainReport {
  double best_M_A = 0.0;
  double best_G_A = 0.0;
  double best_validation = 0.0;
  std::size_t ett_MA = 0;
  std::size_t ett_GA = 0;
  std::size_t epochs_run = 0;
  std::vector<EpochRecord> history;
  // FFF only: per-epoch batch-mean node entropies from the training passes.
  std::vector<EntropySnapshot> entropy_log;
  Model best_model;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// `data.test` may be empty, in which case G_A is measured on validation.
TrainReport train(const Model& initial, const DatasetSplits& data, const TrainConfig& config);

}  // namespace fffkit
