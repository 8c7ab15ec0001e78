#include "fffkit/fff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <string>

namespace fffkit {

void FffConfig::validate() const {
  if (dim_in == 0 || dim_out == 0 || node_size == 0 || leaf_size == 0) {
    throw ContractError("fff config needs dim_in, dim_out, node_size, leaf_size >= 1");
  }
  if (depth > 30) throw ContractError("fff depth " + std::to_string(depth) + " is too large");
  if (!(hardening_coeff >= 0.0)) throw ContractError("hardening coefficient must be >= 0");
  if (!(transpose_prob >= 0.0 && transpose_prob < 0.5)) {
    throw ContractError("transpose probability must lie in [0, 0.5), got " +
                        std::to_string(transpose_prob));
  }
}

namespace {

FfConfig node_config(const FffConfig& cfg) {
  return {cfg.dim_in, cfg.node_size, 1, cfg.effective_node_activation()};
}

FfConfig leaf_config(const FffConfig& cfg) {
  return {cfg.dim_in, cfg.leaf_size, cfg.dim_out, cfg.leaf_activation};
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv_update(std::uint64_t h, std::span<const double> values) {
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h = (h ^ bits) * kFnvPrime;
  }
  return h;
}

void check_batch(const FffConfig& cfg, const Matrix& batch) {
  if (batch.cols() != cfg.dim_in) {
    throw DimensionError("fff expects input width " + std::to_string(cfg.dim_in) + ", got batch " +
                         batch.shape_string());
  }
}

double choice_derivative(double logit, double c) {
  return std::abs(logit) >= kSigmoidClamp ? 0.0 : c * (1.0 - c);
}

}  // namespace

std::uint64_t fingerprint(const Matrix& m) {
  std::uint64_t h = kFnvOffset;
  h = (h ^ m.rows()) * kFnvPrime;
  h = (h ^ m.cols()) * kFnvPrime;
  return fnv_update(h, m.values());
}

std::uint64_t fingerprint(const FffParams& p) {
  std::uint64_t h = kFnvOffset;
  for (auto v : parameter_views(p)) h = fnv_update((h ^ v.size()) * kFnvPrime, v);
  return h;
}

FffParams fff_zeros(const FffConfig& cfg) {
  cfg.validate();
  FffParams p;
  p.nodes.assign(cfg.num_nodes(), ff_zeros(node_config(cfg)));
  p.leaves.assign(cfg.num_leaves(), ff_zeros(leaf_config(cfg)));
  return p;
}

FffParams fff_init(const FffConfig& cfg, Rng& rng) {
  cfg.validate();
  FffParams p;
  p.nodes.reserve(cfg.num_nodes());
  for (std::size_t t = 0; t < cfg.num_nodes(); ++t) {
    FeedForward node = ff_init(node_config(cfg), rng);
    for (double& w : node.out_w.values()) w *= 0.1;
    p.nodes.push_back(std::move(node));
  }
  p.leaves.reserve(cfg.num_leaves());
  for (std::size_t j = 0; j < cfg.num_leaves(); ++j) p.leaves.push_back(ff_init(leaf_config(cfg), rng));
  return p;
}

void check_params(const FffParams& params, const FffConfig& cfg) {
  cfg.validate();
  if (params.nodes.size() != cfg.num_nodes() || params.leaves.size() != cfg.num_leaves()) {
    throw ContractError("fff params hold " + std::to_string(params.nodes.size()) + " nodes / " +
                        std::to_string(params.leaves.size()) + " leaves; depth " +
                        std::to_string(cfg.depth) + " needs " + std::to_string(cfg.num_nodes()) +
                        " / " + std::to_string(cfg.num_leaves()));
  }
  for (const auto& n : params.nodes) {
    if (n.dim_in() != cfg.dim_in || n.width() != cfg.node_size || n.dim_out() != 1)
      throw ContractError("fff node net has the wrong shape");
  }
  for (const auto& l : params.leaves) {
    if (l.dim_in() != cfg.dim_in || l.width() != cfg.leaf_size || l.dim_out() != cfg.dim_out)
      throw ContractError("fff leaf net has the wrong shape");
  }
}

std::vector<std::span<double>> parameter_views(FffParams& p) {
  std::vector<std::span<double>> out;
  for (auto& n : p.nodes)
    for (auto v : parameter_views(n)) out.push_back(v);
  for (auto& l : p.leaves)
    for (auto v : parameter_views(l)) out.push_back(v);
  return out;
}

std::vector<std::span<const double>> parameter_views(const FffParams& p) {
  std::vector<std::span<const double>> out;
  for (const auto& n : p.nodes)
    for (auto v : parameter_views(n)) out.push_back(v);
  for (const auto& l : p.leaves)
    for (auto v : parameter_views(l)) out.push_back(v);
  return out;
}

namespace {

FffTrainOutput forward_train_impl(const FffParams& params, const FffConfig& cfg, const Matrix& batch,
                                  Rng* rng) {
  check_batch(cfg, batch);
  check_params(params, cfg);
  const std::size_t rows = batch.rows();
  const std::size_t num_nodes = cfg.num_nodes();
  const std::size_t num_leaves = cfg.num_leaves();
  const bool transpose = rng != nullptr && cfg.transpose_prob > 0.0;

  FffForwardTrace tr;
  tr.batch_rows = rows;
  tr.batch_fingerprint = fingerprint(batch);
  tr.params_fingerprint = fingerprint(params);
  tr.node_choices = Matrix(rows, num_nodes);
  tr.node_logits = Matrix(rows, num_nodes);
  tr.right_share = Matrix(rows, num_nodes);
  tr.reach = Matrix(rows, num_nodes);
  tr.transposed_mask.assign(rows * num_nodes, 0);
  tr.node_caches.resize(num_nodes);

  // Level by level: every node of a level is evaluated on the whole batch and
  // its reach is split between its two children.
  Matrix level_reach(rows, 1, 1.0);
  for (std::size_t level = 0; level < cfg.depth; ++level) {
    const std::size_t first = (std::size_t{1} << level) - 1;
    const std::size_t width = std::size_t{1} << level;
    Matrix next_reach(rows, 2 * width);
    for (std::size_t q = 0; q < width; ++q) {
      const std::size_t t = first + q;
      Matrix logits = ff_forward(params.nodes[t], batch, &tr.node_caches[t]);
      for (std::size_t b = 0; b < rows; ++b) {
        const double logit = logits(b, 0);
        const double c = sigmoid(logit);
        bool flip = false;
        if (transpose) flip = rng->bernoulli(cfg.transpose_prob);
        const double right = flip ? 1.0 - c : c;
        const double arrive = level_reach(b, q);
        tr.node_logits(b, t) = logit;
        tr.node_choices(b, t) = c;
        tr.right_share(b, t) = right;
        tr.reach(b, t) = arrive;
        tr.transposed_mask[b * num_nodes + t] = flip ? 1 : 0;
        next_reach(b, 2 * q) = arrive * (1.0 - right);
        next_reach(b, 2 * q + 1) = arrive * right;
      }
    }
    level_reach = std::move(next_reach);
  }
  tr.leaf_mixture = std::move(level_reach);

  tr.leaf_caches.resize(num_leaves);
  tr.leaf_outputs.resize(num_leaves);
  for (std::size_t j = 0; j < num_leaves; ++j) {
    tr.leaf_outputs[j] = ff_forward(params.leaves[j], batch, &tr.leaf_caches[j]);
  }

  Matrix output;
  if (cfg.depth == 0) {
    output = tr.leaf_outputs[0];
  } else {
    output = Matrix(rows, cfg.dim_out);
    for (std::size_t j = 0; j < num_leaves; ++j) {
      const Matrix& leaf_out = tr.leaf_outputs[j];
      for (std::size_t b = 0; b < rows; ++b) {
        const double w = tr.leaf_mixture(b, j);
        auto dst = output.row(b);
        auto src = leaf_out.row(b);
        for (std::size_t o = 0; o < cfg.dim_out; ++o) dst[o] += w * src[o];
      }
    }
  }
  return {std::move(output), std::move(tr)};
}

}  // namespace

FffTrainOutput forward_train(const FffParams& params, const FffConfig& cfg, const Matrix& batch,
                             Rng& rng) {
  return forward_train_impl(params, cfg, batch, &rng);
}

FffTrainOutput forward_train(const FffParams& params, const FffConfig& cfg, const Matrix& batch) {
  return forward_train_impl(params, cfg, batch, nullptr);
}

FffInferOutput forward_infer(const FffParams& params, const FffConfig& cfg, const Matrix& batch,
                             simd::MacTally* tally) {
  check_batch(cfg, batch);
  check_params(params, cfg);
  const auto& k = simd::active();
  const std::size_t rows = batch.rows();
  const std::size_t num_nodes = cfg.num_nodes();

  // Batched descent: one indexed node evaluation per sample per level.
  std::vector<std::size_t> current(rows, 0);
  std::vector<double> node_hidden(cfg.node_size);
  double logit = 0.0;
  for (std::size_t level = 0; level < cfg.depth; ++level) {
    for (std::size_t b = 0; b < rows; ++b) {
      const FeedForward& node = params.nodes[current[b]];
      auto x = batch.row(b);
      if (cfg.node_size == 1) {
        // in_w is a dim_in x 1 column, contiguous in memory
        const double hidden = k.dot(x.data(), node.in_w.data(), cfg.dim_in) + node.in_b[0];
        logit = hidden * node.out_w(0, 0) + node.out_b[0];
        if (tally) tally->add(cfg.dim_in + 1);
      } else {
        ff_forward_sample(node, x, node_hidden, std::span<double>(&logit, 1), tally);
      }
      const double c = sigmoid(logit);
      current[b] = 2 * current[b] + (c >= 0.5 ? 2 : 1);
    }
  }

  FffInferOutput out;
  out.output = Matrix(rows, cfg.dim_out);
  out.leaf_index.resize(rows);
  std::vector<double> leaf_hidden(cfg.leaf_size);
  for (std::size_t b = 0; b < rows; ++b) {
    const std::size_t leaf = current[b] - num_nodes;
    out.leaf_index[b] = leaf;
    ff_forward_sample(params.leaves[leaf], batch.row(b), leaf_hidden, out.output.row(b), tally);
  }
  return out;
}

FffGradients backward(const FffParams& params, const FffConfig& cfg, const FffForwardTrace& trace,
                      const Matrix& batch, const Matrix& output_grad, const Matrix* choice_grad) {
  check_batch(cfg, batch);
  check_params(params, cfg);
  const std::size_t rows = batch.rows();
  const std::size_t num_nodes = cfg.num_nodes();
  const std::size_t num_leaves = cfg.num_leaves();
  if (trace.batch_rows != rows || trace.leaf_outputs.size() != num_leaves ||
      trace.node_caches.size() != num_nodes || trace.batch_fingerprint != fingerprint(batch) ||
      trace.params_fingerprint != fingerprint(params)) {
    throw ContractError("fff backward: trace was not produced by forward_train on this batch and "
                        "these parameters");
  }
  if (output_grad.rows() != rows || output_grad.cols() != cfg.dim_out) {
    throw DimensionError("fff backward: output gradient " + output_grad.shape_string() +
                         " does not match [" + std::to_string(rows) + "x" +
                         std::to_string(cfg.dim_out) + "]");
  }
  if (choice_grad && (choice_grad->rows() != rows || choice_grad->cols() != num_nodes)) {
    throw DimensionError("fff backward: choice gradient " + choice_grad->shape_string() +
                         " does not match the trace");
  }

  FffGradients grads = fff_zeros(cfg);

  // upstream(b, v): d loss / d (probability of reaching vertex v) for sample b.
  // Vertices 0..num_nodes-1 are nodes, num_nodes + j is leaf j.
  Matrix upstream(rows, num_nodes + num_leaves);
  for (std::size_t j = 0; j < num_leaves; ++j) {
    const Matrix& leaf_out = trace.leaf_outputs[j];
    Matrix leaf_grad(rows, cfg.dim_out);
    for (std::size_t b = 0; b < rows; ++b) {
      auto g = output_grad.row(b);
      auto y = leaf_out.row(b);
      double s = 0.0;
      for (std::size_t o = 0; o < cfg.dim_out; ++o) s += g[o] * y[o];
      upstream(b, num_nodes + j) = s;
      const double w = trace.leaf_mixture(b, j);
      auto lg = leaf_grad.row(b);
      for (std::size_t o = 0; o < cfg.dim_out; ++o) lg[o] = w * g[o];
    }
    ff_backward(params.leaves[j], batch, trace.leaf_caches[j], leaf_grad, grads.leaves[j]);
  }

  // Children are always visited before their parent.
  for (std::size_t t = num_nodes; t-- > 0;) {
    const std::size_t left = 2 * t + 1;
    const std::size_t right = 2 * t + 2;
    Matrix logit_grad(rows, 1);
    for (std::size_t b = 0; b < rows; ++b) {
      const double r = trace.right_share(b, t);
      const double up_l = upstream(b, left);
      const double up_r = upstream(b, right);
      upstream(b, t) = (1.0 - r) * up_l + r * up_r;
      double d_choice = trace.reach(b, t) * (up_r - up_l);
      if (trace.transposed(b, t)) d_choice = -d_choice;
      if (choice_grad) d_choice += (*choice_grad)(b, t);
      logit_grad(b, 0) =
          d_choice * choice_derivative(trace.node_logits(b, t), trace.node_choices(b, t));
    }
    ff_backward(params.nodes[t], batch, trace.node_caches[t], logit_grad, grads.nodes[t]);
  }
  return grads;
}

double bernoulli_entropy(double p, EntropyBase base) noexcept {
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
  return base == EntropyBase::bits ? h / std::numbers::ln2 : h;
}

HardeningLoss hardening_loss(const FffForwardTrace& trace, const FffConfig& cfg) {
  const std::size_t rows = trace.node_choices.rows();
  const std::size_t num_nodes = trace.node_choices.cols();
  HardeningLoss out;
  out.choice_grad = Matrix(rows, num_nodes);
  if (rows == 0 || num_nodes == 0) return out;
  const double scale = cfg.hardening_coeff / static_cast<double>(rows);
  const double log_unit = cfg.entropy_base == EntropyBase::bits ? std::numbers::ln2 : 1.0;
  double total = 0.0;
  for (std::size_t b = 0; b < rows; ++b) {
    for (std::size_t t = 0; t < num_nodes; ++t) {
      const double c = trace.node_choices(b, t);
      total += bernoulli_entropy(c, cfg.entropy_base);
      // dH/dc = log((1 - c) / c)
      out.choice_grad(b, t) = scale * (std::log1p(-c) - std::log(c)) / log_unit;
    }
  }
  out.loss = scale * total;
  return out;
}

EntropySnapshot entropy_snapshot(const FffForwardTrace& trace, const FffConfig& cfg,
                                 std::size_t epoch) {
  const std::size_t rows = trace.node_choices.rows();
  const std::size_t num_nodes = trace.node_choices.cols();
  EntropySnapshot snap;
  snap.epoch = epoch;
  snap.per_node_mean_entropy.assign(num_nodes, 0.0);
  if (rows == 0) return snap;
  for (std::size_t t = 0; t < num_nodes; ++t) {
    double sum = 0.0;
    for (std::size_t b = 0; b < rows; ++b) sum += bernoulli_entropy(trace.node_choices(b, t), cfg.entropy_base);
    snap.per_node_mean_entropy[t] = sum / static_cast<double>(rows);
  }
  if (num_nodes > 0) {
    double s = 0.0;
    for (double e : snap.per_node_mean_entropy) s += e;
    snap.overall_mean = s / static_cast<double>(num_nodes);
  }
  return snap;
}

std::vector<bool> is_hardened(const EntropySnapshot& snapshot, double threshold) {
  std::vector<bool> flags;
  flags.reserve(snapshot.per_node_mean_entropy.size());
  for (double e : snapshot.per_node_mean_entropy) flags.push_back(e < threshold);
  return flags;
}

FffSizes fff_sizes(const FffConfig& cfg) {
  FffSizes s;
  const std::uint64_t leaves = cfg.num_leaves();
  const std::uint64_t nodes = cfg.num_nodes();
  s.training_width = leaves * cfg.leaf_size;
  s.inference_width = cfg.leaf_size;
  s.training_size = nodes * cfg.node_size + s.training_width;
  s.inference_size = cfg.depth * cfg.node_size + cfg.leaf_size;
  s.overhead_train = s.training_size - s.training_width;
  s.overhead_infer = s.inference_size - s.inference_width;
  return s;
}

std::uint64_t flop_count_infer(const FffConfig& cfg, std::uint64_t batch) {
  const std::uint64_t node = static_cast<std::uint64_t>(cfg.node_size) * (cfg.dim_in + 1);
  const std::uint64_t leaf = ff_macs_per_sample(cfg.dim_in, cfg.leaf_size, cfg.dim_out);
  return batch * (cfg.depth * node + leaf);
}

std::uint64_t flop_count_train(const FffConfig& cfg, std::uint64_t batch) {
  const std::uint64_t node = static_cast<std::uint64_t>(cfg.node_size) * (cfg.dim_in + 1);
  const std::uint64_t leaf = ff_macs_per_sample(cfg.dim_in, cfg.leaf_size, cfg.dim_out);
  const std::uint64_t mixing = cfg.depth > 0 ? cfg.num_leaves() * cfg.dim_out : 0;
  return batch * (cfg.num_nodes() * node + cfg.num_leaves() * leaf + mixing);
}

}  // namespace fffkit
