#include "fffkit/moe.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace fffkit {

void MoeConfig::validate() const {
  if (dim_in == 0 || dim_out == 0 || expert_width == 0) {
    throw ContractError("moe config needs dim_in, dim_out, expert_width >= 1");
  }
  if (num_experts == 0) throw ContractError("moe needs at least one expert");
  if (k == 0 || k > num_experts) {
    throw ContractError("moe k must satisfy 1 <= k <= g (k=" + std::to_string(k) +
                        ", g=" + std::to_string(num_experts) + ")");
  }
  if (!(w_importance >= 0.0) || !(w_load >= 0.0)) {
    throw ContractError("moe balance coefficients must be >= 0");
  }
}

MoeConfig MoeParams::config() const {
  return {dim_in(),     dim_out(), num_experts(), expert_width(), k, w_importance, w_load,
          experts.empty() ? Activation::relu : experts.front().activation};
}

MoeParams moe_zeros(const MoeConfig& cfg) {
  cfg.validate();
  MoeParams p;
  p.experts.assign(cfg.num_experts,
                   ff_zeros({cfg.dim_in, cfg.expert_width, cfg.dim_out, cfg.activation}));
  p.gate_weights = Matrix(cfg.dim_in, cfg.num_experts);
  p.noise_weights = Matrix(cfg.dim_in, cfg.num_experts);
  p.k = cfg.k;
  p.w_importance = cfg.w_importance;
  p.w_load = cfg.w_load;
  return p;
}

MoeParams moe_init(const MoeConfig& cfg, Rng& rng) {
  MoeParams p = moe_zeros(cfg);
  for (auto& e : p.experts) e = ff_init({cfg.dim_in, cfg.expert_width, cfg.dim_out, cfg.activation}, rng);
  return p;
}

std::vector<std::span<double>> parameter_views(MoeParams& p) {
  std::vector<std::span<double>> out;
  for (auto& e : p.experts)
    for (auto v : parameter_views(e)) out.push_back(v);
  out.push_back(p.gate_weights.values());
  out.push_back(p.noise_weights.values());
  return out;
}

std::vector<std::span<const double>> parameter_views(const MoeParams& p) {
  std::vector<std::span<const double>> out;
  for (const auto& e : p.experts)
    for (auto v : parameter_views(e)) out.push_back(v);
  out.push_back(p.gate_weights.values());
  out.push_back(p.noise_weights.values());
  return out;
}

std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (values[a] != values[b]) return values[a] > values[b];
                      return a < b;
                    });
  idx.resize(k);
  return idx;
}

namespace {

void check_batch(const MoeParams& p, const Matrix& batch) {
  if (batch.cols() != p.dim_in()) {
    throw DimensionError("moe expects input width " + std::to_string(p.dim_in()) + ", got batch " +
                         batch.shape_string());
  }
}

void softmax_inplace(std::span<double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    total += x;
  }
  for (double& x : v) x /= total;
}

MoeTrainOutput forward_train_impl(const MoeParams& params, const Matrix& batch, Rng* rng,
                                  const Matrix* frozen_noise) {
  params.config().validate();
  check_batch(params, batch);
  if (params.k < 2) {
    throw ContractError("moe training requires k >= 2: with a single engaged expert the gates are "
                        "constant 1 and no gradient reaches the gating network");
  }
  const std::size_t rows = batch.rows();
  const std::size_t g = params.num_experts();
  const std::size_t k = params.k;

  MoeGateTrace tr;
  tr.batch_rows = rows;
  tr.k = k;
  tr.clean_logits = matmul(batch, params.gate_weights);
  tr.noise_logits = matmul(batch, params.noise_weights);
  tr.noise_std = softplus(tr.noise_logits);
  if (frozen_noise) {
    if (frozen_noise->rows() != rows || frozen_noise->cols() != g) {
      throw DimensionError("moe frozen noise " + frozen_noise->shape_string() +
                           " does not match batch x experts");
    }
    tr.noise = *frozen_noise;
  } else {
    tr.noise = gaussian_noise(*rng, rows, g);
  }
  tr.noisy_logits = Matrix(rows, g);
  {
    auto c = tr.clean_logits.values();
    auto s = tr.noise_std.values();
    auto n = tr.noise.values();
    auto h = tr.noisy_logits.values();
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = c[i] + n[i] * s[i];
  }

  tr.gates = Matrix(rows, g);
  tr.selected.resize(rows);
  tr.expert_rows.assign(g, {});
  std::vector<double> chosen(k);
  for (std::size_t b = 0; b < rows; ++b) {
    auto sel = top_k_indices(tr.noisy_logits.row(b), k);
    for (std::size_t i = 0; i < k; ++i) chosen[i] = tr.noisy_logits(b, sel[i]);
    softmax_inplace(chosen);
    for (std::size_t i = 0; i < k; ++i) {
      tr.gates(b, sel[i]) = chosen[i];
      tr.expert_rows[sel[i]].push_back(b);
    }
    tr.selected[b] = std::move(sel);
  }

  tr.expert_inputs.resize(g);
  tr.expert_caches.resize(g);
  tr.expert_outputs.resize(g);
  for (std::size_t e = 0; e < g; ++e) {
    if (tr.expert_rows[e].empty()) continue;
    tr.expert_inputs[e] = gather_rows(batch, tr.expert_rows[e]);
    tr.expert_outputs[e] = ff_forward(params.experts[e], tr.expert_inputs[e], &tr.expert_caches[e]);
  }

  // Mix in selection order per sample.
  std::vector<std::vector<std::size_t>> slot(g);
  for (std::size_t e = 0; e < g; ++e) {
    slot[e].assign(rows, 0);
    for (std::size_t i = 0; i < tr.expert_rows[e].size(); ++i) slot[e][tr.expert_rows[e][i]] = i;
  }
  Matrix output(rows, params.dim_out());
  for (std::size_t b = 0; b < rows; ++b) {
    auto dst = output.row(b);
    for (std::size_t e : tr.selected[b]) {
      const double w = tr.gates(b, e);
      auto src = tr.expert_outputs[e].row(slot[e][b]);
      for (std::size_t o = 0; o < dst.size(); ++o) dst[o] += w * src[o];
    }
  }
  return {std::move(output), std::move(tr)};
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

MoeTrainOutput moe_forward_train(const MoeParams& params, const Matrix& batch, Rng& rng) {
  return forward_train_impl(params, batch, &rng, nullptr);
}

MoeTrainOutput moe_forward_train(const MoeParams& params, const Matrix& batch,
                                 const Matrix& frozen_noise) {
  return forward_train_impl(params, batch, nullptr, &frozen_noise);
}

Matrix moe_forward_infer(const MoeParams& params, const Matrix& batch, simd::MacTally* tally) {
  params.config().validate();
  check_batch(params, batch);
  const auto& kern = simd::active();
  const std::size_t rows = batch.rows();
  const std::size_t g = params.num_experts();
  const std::size_t k = params.k;
  const std::size_t dim_out = params.dim_out();

  Matrix output(rows, dim_out);
  std::vector<double> logits(g);
  std::vector<double> chosen(k);
  std::vector<double> hidden(params.expert_width());
  std::vector<double> expert_out(dim_out);
  for (std::size_t b = 0; b < rows; ++b) {
    auto x = batch.row(b);
    std::fill(logits.begin(), logits.end(), 0.0);
    for (std::size_t p = 0; p < x.size(); ++p)
      kern.axpy(x[p], params.gate_weights.row(p).data(), logits.data(), g);
    if (tally) tally->add(static_cast<std::uint64_t>(x.size()) * g);

    auto sel = top_k_indices(logits, k);
    auto dst = output.row(b);
    if (k == 1) {
      ff_forward_sample(params.experts[sel[0]], x, hidden, dst, tally);
      continue;
    }
    for (std::size_t i = 0; i < k; ++i) chosen[i] = logits[sel[i]];
    softmax_inplace(chosen);
    for (std::size_t i = 0; i < k; ++i) {
      ff_forward_sample(params.experts[sel[i]], x, hidden, expert_out, tally);
      kern.axpy(chosen[i], expert_out.data(), dst.data(), dim_out);
    }
    if (tally) tally->add(static_cast<std::uint64_t>(k) * dim_out);
  }
  return output;
}

double cv_squared(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  if (mean == 0.0) return 0.0;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  return var / (mean * mean);
}

std::vector<double> cv_squared_gradient(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<double> grad(n, 0.0);
  if (n < 2) return grad;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  if (mean == 0.0) return grad;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  // d(var / mean^2) / dv_i = (2 / (n mean^2)) * ((v_i - mean) - var / mean)
  const double scale = 2.0 / (static_cast<double>(n) * mean * mean);
  for (std::size_t i = 0; i < n; ++i) grad[i] = scale * ((values[i] - mean) - var / mean);
  return grad;
}

MoeBalanceLosses moe_balance_losses(const MoeGateTrace& trace, const MoeParams& params) {
  const std::size_t rows = trace.batch_rows;
  const std::size_t g = params.num_experts();
  const std::size_t k = trace.k;
  MoeBalanceLosses out;
  out.gate_grad = Matrix(rows, g);
  out.clean_logit_grad = Matrix(rows, g);
  out.noise_std_grad = Matrix(rows, g);
  out.importance.assign(g, 0.0);
  out.load.assign(g, 0.0);

  for (std::size_t b = 0; b < rows; ++b)
    for (std::size_t e = 0; e < g; ++e) out.importance[e] += trace.gates(b, e);
  out.importance_loss = params.w_importance * cv_squared(out.importance);
  const auto imp_grad = cv_squared_gradient(out.importance);
  for (std::size_t b = 0; b < rows; ++b)
    for (std::size_t e = 0; e < g; ++e) out.gate_grad(b, e) = params.w_importance * imp_grad[e];

  if (k >= g) {
    // Every expert is always engaged: the load is the constant batch size.
    for (std::size_t e = 0; e < g; ++e) out.load[e] = static_cast<double>(rows);
    out.load_loss = params.w_load * cv_squared(out.load);
    return out;
  }

  // thresholds: element k of the top k+1 for experts in the selection, k-1 otherwise
  Matrix z(rows, g);
  std::vector<std::vector<std::size_t>> top(rows);
  for (std::size_t b = 0; b < rows; ++b) {
    top[b] = top_k_indices(trace.noisy_logits.row(b), k + 1);
    for (std::size_t e = 0; e < g; ++e) {
      const bool in = std::find(trace.selected[b].begin(), trace.selected[b].end(), e) !=
                      trace.selected[b].end();
      const std::size_t thr_expert = in ? top[b][k] : top[b][k - 1];
      const double thr = trace.noisy_logits(b, thr_expert);
      const double sigma = trace.noise_std(b, e);
      z(b, e) = sigma > 0.0 ? (trace.clean_logits(b, e) - thr) / sigma
                            : (trace.clean_logits(b, e) > thr ? INFINITY : -INFINITY);
      out.load[e] += normal_cdf(z(b, e));
    }
  }
  out.load_loss = params.w_load * cv_squared(out.load);
  const auto load_grad = cv_squared_gradient(out.load);
  for (std::size_t b = 0; b < rows; ++b) {
    for (std::size_t e = 0; e < g; ++e) {
      const double sigma = trace.noise_std(b, e);
      if (!(sigma > 0.0) || !std::isfinite(z(b, e))) continue;
      const double dz = params.w_load * load_grad[e] * normal_pdf(z(b, e));
      const bool in = std::find(trace.selected[b].begin(), trace.selected[b].end(), e) !=
                      trace.selected[b].end();
      const std::size_t thr_expert = in ? top[b][k] : top[b][k - 1];
      out.clean_logit_grad(b, e) += dz / sigma;
      out.noise_std_grad(b, e) += -dz * z(b, e) / sigma;
      // thr = clean_j + noise_j * sigma_j
      out.clean_logit_grad(b, thr_expert) += -dz / sigma;
      out.noise_std_grad(b, thr_expert) += -dz / sigma * trace.noise(b, thr_expert);
    }
  }
  return out;
}

MoeGradients moe_backward(const MoeParams& params, const MoeGateTrace& trace, const Matrix& batch,
                          const Matrix& output_grad, const MoeBalanceLosses* balance) {
  check_batch(params, batch);
  const std::size_t rows = batch.rows();
  const std::size_t g = params.num_experts();
  if (trace.batch_rows != rows || trace.expert_outputs.size() != g) {
    throw ContractError("moe backward: trace does not belong to this batch");
  }
  if (output_grad.rows() != rows || output_grad.cols() != params.dim_out()) {
    throw DimensionError("moe backward: output gradient " + output_grad.shape_string() +
                         " does not match the batch");
  }

  MoeGradients grads = moe_zeros(params.config());
  Matrix gate_grad(rows, g);
  for (std::size_t e = 0; e < g; ++e) {
    const auto& rows_e = trace.expert_rows[e];
    if (rows_e.empty()) continue;
    Matrix eg(rows_e.size(), params.dim_out());
    for (std::size_t i = 0; i < rows_e.size(); ++i) {
      const std::size_t b = rows_e[i];
      auto dy = output_grad.row(b);
      auto y = trace.expert_outputs[e].row(i);
      double s = 0.0;
      for (std::size_t o = 0; o < dy.size(); ++o) {
        s += dy[o] * y[o];
        eg(i, o) = trace.gates(b, e) * dy[o];
      }
      gate_grad(b, e) = s;
    }
    ff_backward(params.experts[e], trace.expert_inputs[e], trace.expert_caches[e], eg,
                grads.experts[e]);
  }

  Matrix d_clean(rows, g);
  Matrix d_sigma(rows, g);
  for (std::size_t b = 0; b < rows; ++b) {
    const auto& sel = trace.selected[b];
    double weighted = 0.0;
    for (std::size_t e : sel) {
      double dg = gate_grad(b, e);
      if (balance) dg += balance->gate_grad(b, e);
      weighted += trace.gates(b, e) * dg;
    }
    for (std::size_t e : sel) {
      double dg = gate_grad(b, e);
      if (balance) dg += balance->gate_grad(b, e);
      const double dh = trace.gates(b, e) * (dg - weighted);
      d_clean(b, e) += dh;
      d_sigma(b, e) += dh * trace.noise(b, e);
    }
    if (balance) {
      for (std::size_t e = 0; e < g; ++e) {
        d_clean(b, e) += balance->clean_logit_grad(b, e);
        d_sigma(b, e) += balance->noise_std_grad(b, e);
      }
    }
  }
  Matrix d_noise_logit(rows, g);
  for (std::size_t i = 0; i < d_noise_logit.size(); ++i) {
    d_noise_logit.values()[i] = d_sigma.values()[i] * sigmoid(trace.noise_logits.values()[i]);
  }
  grads.gate_weights = matmul_at_b(batch, d_clean);
  grads.noise_weights = matmul_at_b(batch, d_noise_logit);
  return grads;
}

std::uint64_t moe_flop_count_infer(const MoeConfig& cfg, std::uint64_t batch) {
  const std::uint64_t gate = static_cast<std::uint64_t>(cfg.dim_in) * cfg.num_experts;
  const std::uint64_t experts = cfg.k * ff_macs_per_sample(cfg.dim_in, cfg.expert_width, cfg.dim_out);
  const std::uint64_t mixing = cfg.k > 1 ? static_cast<std::uint64_t>(cfg.k) * cfg.dim_out : 0;
  return batch * (gate + experts + mixing);
}

}  // namespace fffkit
