#include "fffkit/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace fffkit {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::string_view layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::ff:
      return "ff";
    case LayerKind::moe:
      return "moe";
    case LayerKind::fff:
      return "fff";
  }
  return "unknown";
}

bool parse_layer_kind(std::string_view name, LayerKind& out) {
  for (LayerKind k : {LayerKind::ff, LayerKind::moe, LayerKind::fff}) {
    if (layer_kind_name(k) == name) {
      out = k;
      return true;
    }
  }
  return false;
}

LayerKind kind_of(const Model& m) {
  return std::visit(overloaded{[](const FfModel&) { return LayerKind::ff; },
                               [](const MoeModel&) { return LayerKind::moe; },
                               [](const FffModel&) { return LayerKind::fff; }},
                    m);
}

std::size_t model_dim_in(const Model& m) {
  return std::visit(overloaded{[](const FfModel& f) { return f.params.dim_in(); },
                               [](const MoeModel& f) { return f.params.dim_in(); },
                               [](const FffModel& f) { return f.config.dim_in; }},
                    m);
}

std::size_t model_dim_out(const Model& m) {
  return std::visit(overloaded{[](const FfModel& f) { return f.params.dim_out(); },
                               [](const MoeModel& f) { return f.params.dim_out(); },
                               [](const FffModel& f) { return f.config.dim_out; }},
                    m);
}

Matrix predict_logits(const Model& model, const Matrix& batch, EvalMode mode) {
  return std::visit(overloaded{[&](const FfModel& f) { return ff_forward(f.params, batch); },
                               [&](const MoeModel& f) { return moe_forward_infer(f.params, batch); },
                               [&](const FffModel& f) {
                                 if (mode == EvalMode::train_forward)
                                   return forward_train(f.params, f.config, batch).output;
                                 return forward_infer(f.params, f.config, batch).output;
                               }},
                    model);
}

double evaluate(const Model& model, const Dataset& data, EvalMode mode) {
  if (data.size() == 0) return 0.0;
  constexpr std::size_t kChunk = 1024;
  std::size_t correct = 0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(data.size(), start + kChunk);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const Matrix logits = predict_logits(model, gather_rows(data.features, rows), mode);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto r = logits.row(i);
      const auto best = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
      if (best == data.labels[start + i]) ++correct;
    }
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

SoftmaxCrossEntropy softmax_cross_entropy(const Matrix& logits,
                                          std::span<const std::uint32_t> labels) {
  if (labels.size() != logits.rows()) {
    throw DimensionError("cross entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         logits.shape_string());
  }
  SoftmaxCrossEntropy out;
  out.logit_grad = softmax_rows(logits);
  const double inv = logits.rows() ? 1.0 / static_cast<double>(logits.rows()) : 0.0;
  double total = 0.0;
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    auto z = logits.row(b);
    if (labels[b] >= z.size()) throw DimensionError("cross entropy: label out of range");
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    total += (mx + std::log(s)) - z[labels[b]];
    auto g = out.logit_grad.row(b);
    g[labels[b]] -= 1.0;
    for (double& v : g) v *= inv;
  }
  out.loss = total * inv;
  return out;
}

void TrainConfig::validate() const {
  if (batch_size == 0 || max_epochs == 0 || early_stop_patience == 0) {
    throw ContractError("train config needs batch_size, max_epochs, early_stop_patience >= 1");
  }
  if (early_stop_patience > max_epochs || lr_halving_patience > max_epochs) {
    throw ContractError("train config patience exceeds max_epochs");
  }
  if (!(optimizer.learning_rate > 0.0)) throw ContractError("learning rate must be positive");
}

namespace {

std::vector<std::span<double>> views_of(Model& m) {
  return std::visit([](auto& f) { return parameter_views(f.params); }, m);
}

struct StepResult {
  double loss = 0.0;
  Matrix logits;
};

// One optimization step on a minibatch. Appends the node entropies of the
// training pass to `entropy_sum` for FFF models.
StepResult train_step(Model& model, const Matrix& x, std::span<const std::uint32_t> y,
                      Optimizer& opt, Rng& rng, std::vector<double>& entropy_sum) {
  StepResult res;
  std::vector<std::span<double>> grad_views;
  std::visit(overloaded{
                 [&](FfModel& f) {
                   FfCache cache;
                   res.logits = ff_forward(f.params, x, &cache);
                   auto ce = softmax_cross_entropy(res.logits, y);
                   res.loss = ce.loss;
                   FeedForward grads = ff_zeros_like(f.params);
                   ff_backward(f.params, x, cache, ce.logit_grad, grads);
                   opt.step(parameter_views(f.params), parameter_views(grads));
                 },
                 [&](MoeModel& f) {
                   auto fwd = moe_forward_train(f.params, x, rng);
                   res.logits = std::move(fwd.output);
                   auto ce = softmax_cross_entropy(res.logits, y);
                   auto bal = moe_balance_losses(fwd.trace, f.params);
                   res.loss = ce.loss + bal.importance_loss + bal.load_loss;
                   MoeGradients grads = moe_backward(f.params, fwd.trace, x, ce.logit_grad, &bal);
                   opt.step(parameter_views(f.params), parameter_views(grads));
                 },
                 [&](FffModel& f) {
                   auto fwd = forward_train(f.params, f.config, x, rng);
                   res.logits = std::move(fwd.output);
                   auto ce = softmax_cross_entropy(res.logits, y);
                   res.loss = ce.loss;
                   FffGradients grads;
                   if (f.config.hardening_coeff > 0.0 && f.config.depth > 0) {
                     auto hard = hardening_loss(fwd.trace, f.config);
                     res.loss += hard.loss;
                     grads = backward(f.params, f.config, fwd.trace, x, ce.logit_grad, &hard.choice_grad);
                   } else {
                     grads = backward(f.params, f.config, fwd.trace, x, ce.logit_grad);
                   }
                   auto snap = entropy_snapshot(fwd.trace, f.config, 0);
                   for (std::size_t t = 0; t < snap.per_node_mean_entropy.size(); ++t) {
                     entropy_sum[t] += snap.per_node_mean_entropy[t] * static_cast<double>(x.rows());
                   }
                   opt.step(parameter_views(f.params), parameter_views(grads));
                 }},
             model);
  return res;
}

}  // namespace

TrainReport train(const Model& initial, const DatasetSplits& data, const TrainConfig& config) {
  config.validate();
  const Dataset& train_set = data.train;
  if (train_set.size() == 0) throw ContractError("training set is empty");
  if (train_set.dim() != model_dim_in(initial)) {
    throw DimensionError("model expects " + std::to_string(model_dim_in(initial)) +
                         " inputs, dataset has " + std::to_string(train_set.dim()));
  }
  if (train_set.num_classes > model_dim_out(initial)) {
    throw DimensionError("model has " + std::to_string(model_dim_out(initial)) +
                         " outputs for " + std::to_string(train_set.num_classes) + " classes");
  }
  const Dataset& val_set = data.validation.size() ? data.validation : data.train;
  const Dataset& test_set = data.test.size() ? data.test : val_set;

  Model model = initial;
  std::vector<std::size_t> sizes;
  for (auto v : views_of(model)) sizes.push_back(v.size());
  Optimizer opt(config.optimizer, sizes);
  Rng rng(config.seed);

  const std::size_t num_nodes =
      std::holds_alternative<FffModel>(model) ? std::get<FffModel>(model).config.num_nodes() : 0;

  TrainReport report;
  report.best_M_A = -1.0;
  report.best_validation = -1.0;
  report.best_model = model;
  std::size_t since_stop_metric = 0;
  std::size_t since_train_improve_lr = 0;
  double best_train_for_lr = -1.0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::uint32_t> batch_labels;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    std::vector<double> entropy_sum(num_nodes, 0.0);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      const Matrix x = gather_rows(train_set.features, rows);
      batch_labels.resize(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) batch_labels[i] = train_set.labels[rows[i]];
      StepResult step = train_step(model, x, batch_labels, opt, rng, entropy_sum);
      if (!std::isfinite(step.loss)) {
        std::ostringstream msg;
        msg << "training diverged: loss " << step.loss << " at epoch " << epoch << ", batch starting "
            << start << " (learning rate " << opt.learning_rate() << ")";
        throw TrainingDiverged(msg.str());
      }
      loss_sum += step.loss * static_cast<double>(rows.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_accuracy = evaluate(model, train_set, EvalMode::train_forward);
    rec.validation_accuracy = evaluate(model, val_set, EvalMode::infer_forward);
    rec.learning_rate = opt.learning_rate();
    report.history.push_back(rec);
    report.epochs_run = epoch;

    if (num_nodes > 0) {
      EntropySnapshot snap;
      snap.epoch = epoch;
      snap.per_node_mean_entropy.resize(num_nodes);
      double total = 0.0;
      for (std::size_t t = 0; t < num_nodes; ++t) {
        snap.per_node_mean_entropy[t] = entropy_sum[t] / static_cast<double>(train_set.size());
        total += snap.per_node_mean_entropy[t];
      }
      snap.overall_mean = total / static_cast<double>(num_nodes);
      report.entropy_log.push_back(std::move(snap));
    }

    bool stop_metric_improved = false;
    if (rec.train_accuracy > report.best_M_A) {
      report.best_M_A = rec.train_accuracy;
      report.ett_MA = epoch;
      if (config.stop_on == StopOn::training) stop_metric_improved = true;
    }
    if (rec.validation_accuracy > report.best_validation) {
      report.best_validation = rec.validation_accuracy;
      report.ett_GA = epoch;
      report.best_model = model;
      if (config.stop_on == StopOn::validation) stop_metric_improved = true;
    }
    since_stop_metric = stop_metric_improved ? 0 : since_stop_metric + 1;

    if (config.lr_halving_patience > 0) {
      if (rec.train_accuracy > best_train_for_lr) {
        best_train_for_lr = rec.train_accuracy;
        since_train_improve_lr = 0;
      } else if (++since_train_improve_lr >= config.lr_halving_patience) {
        opt.set_learning_rate(opt.learning_rate() / 2.0);
        since_train_improve_lr = 0;
      }
    }
    if (since_stop_metric >= config.early_stop_patience) break;
  }

  report.best_G_A = evaluate(report.best_model, test_set, EvalMode::infer_forward);
  return report;
}

}  // namespace fffkit
