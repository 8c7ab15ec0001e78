#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace fffkit {

enum class OptimizerKind : std::uint8_t { sgd = 0, adam = 1 };

std::string_view optimizer_name(OptimizerKind k);
bool parse_optimizer(std::string_view name, OptimizerKind& out);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Plain SGD or Adam with bias correction:
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& cfg, std::span<const std::size_t> tensor_sizes);

  void step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads);

  double learning_rate() const noexcept { return cfg_.learning_rate; }
  void set_learning_rate(double lr) noexcept { cfg_.learning_rate = lr; }
  std::uint64_t steps() const noexcept { return steps_; }

 private:
  OptimizerConfig cfg_;
  std::vector<std::size_t> sizes_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t steps_ = 0;
};

}  // namespace fffkit
