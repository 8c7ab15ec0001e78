#include "fffkit/optimizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fffkit/tensor.hpp"

namespace fffkit {

std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

bool parse_optimizer(std::string_view name, OptimizerKind& out) {
  if (name == "sgd") {
    out = OptimizerKind::sgd;
    return true;
  }
  if (name == "adam") {
    out = OptimizerKind::adam;
    return true;
  }
  return false;
}

Optimizer::Optimizer(const OptimizerConfig& cfg, std::span<const std::size_t> tensor_sizes)
    : cfg_(cfg), sizes_(tensor_sizes.begin(), tensor_sizes.end()) {
  if (!(cfg.learning_rate > 0.0)) throw ContractError("learning rate must be positive");
  if (cfg.kind == OptimizerKind::adam) {
    for (std::size_t n : tensor_sizes) {
      m_.emplace_back(n, 0.0);
      v_.emplace_back(n, 0.0);
    }
  }
}

void Optimizer::step(std::span<const std::span<double>> params,
                     std::span<const std::span<double>> grads) {
  if (params.size() != sizes_.size() || grads.size() != sizes_.size()) {
    throw DimensionError("optimizer: expected " + std::to_string(sizes_.size()) + " tensors, got " +
                         std::to_string(params.size()) + " params / " + std::to_string(grads.size()) +
                         " grads");
  }
  for (std::size_t t = 0; t < sizes_.size(); ++t) {
    if (params[t].size() != sizes_[t] || grads[t].size() != sizes_[t]) {
      throw DimensionError("optimizer: tensor " + std::to_string(t) + " size mismatch");
    }
  }
  ++steps_;
  const double lr = cfg_.learning_rate;
  if (cfg_.kind == OptimizerKind::sgd) {
    for (std::size_t t = 0; t < params.size(); ++t) {
      auto p = params[t];
      auto g = grads[t];
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    }
    return;
  }
  if (m_.size() != params.size()) throw DimensionError("optimizer: tensor count changed");
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k];
    auto g = grads[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
    }
  }
}

}  // namespace fffkit
