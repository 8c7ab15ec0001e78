#include "fffkit/feedforward.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fffkit {

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::gelu:
      return "gelu";
    case Activation::none:
      return "none";
  }
  return "unknown";
}

bool parse_activation(std::string_view name, Activation& out) {
  for (Activation a : {Activation::relu, Activation::gelu, Activation::none}) {
    if (activation_name(a) == name) {
      out = a;
      return true;
    }
  }
  return false;
}

double activate(Activation a, double x) noexcept {
  switch (a) {
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
    case Activation::gelu:
      return gelu(x);
    case Activation::none:
      return x;
  }
  return x;
}

double activate_derivative(Activation a, double pre) noexcept {
  switch (a) {
    case Activation::relu:
      return pre > 0.0 ? 1.0 : 0.0;
    case Activation::gelu:
      return gelu_derivative(pre);
    case Activation::none:
      return 1.0;
  }
  return 1.0;
}

void FfConfig::validate() const {
  if (dim_in == 0 || width == 0 || dim_out == 0) {
    throw ContractError("feedforward config needs dim_in, width, dim_out >= 1 (got " +
                        std::to_string(dim_in) + ", " + std::to_string(width) + ", " +
                        std::to_string(dim_out) + ")");
  }
}

FeedForward ff_zeros(const FfConfig& cfg) {
  cfg.validate();
  FeedForward ff;
  ff.in_w = Matrix(cfg.dim_in, cfg.width);
  ff.in_b.assign(cfg.width, 0.0);
  ff.out_w = Matrix(cfg.width, cfg.dim_out);
  ff.out_b.assign(cfg.dim_out, 0.0);
  ff.activation = cfg.activation;
  return ff;
}

FeedForward ff_zeros_like(const FeedForward& ff) {
  return ff_zeros({ff.dim_in(), ff.width(), ff.dim_out(), ff.activation});
}

FeedForward ff_init(const FfConfig& cfg, Rng& rng) {
  FeedForward ff = ff_zeros(cfg);
  const double in_bound = std::sqrt(1.0 / static_cast<double>(cfg.dim_in));
  for (double& w : ff.in_w.values()) w = rng.uniform(-in_bound, in_bound);
  const double out_bound = std::sqrt(1.0 / static_cast<double>(cfg.width));
  for (double& w : ff.out_w.values()) w = rng.uniform(-out_bound, out_bound);
  return ff;
}

std::vector<std::span<double>> parameter_views(FeedForward& ff) {
  return {ff.in_w.values(), ff.in_b, ff.out_w.values(), ff.out_b};
}

std::vector<std::span<const double>> parameter_views(const FeedForward& ff) {
  return {ff.in_w.values(), ff.in_b, ff.out_w.values(), ff.out_b};
}

namespace {

void check_input(const FeedForward& ff, const Matrix& x) {
  if (x.cols() != ff.dim_in()) {
    throw DimensionError("feedforward expects input width " + std::to_string(ff.dim_in()) +
                         ", got batch " + x.shape_string());
  }
}

}  // namespace

Matrix ff_forward(const FeedForward& ff, const Matrix& x, FfCache* cache) {
  check_input(ff, x);
  Matrix pre = matmul(x, ff.in_w);
  add_row_bias(pre, ff.in_b);
  Matrix hidden(pre.rows(), pre.cols());
  {
    auto src = pre.values();
    auto dst = hidden.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = activate(ff.activation, src[i]);
  }
  Matrix out = matmul(hidden, ff.out_w);
  add_row_bias(out, ff.out_b);
  if (cache) {
    cache->pre = std::move(pre);
    cache->hidden = std::move(hidden);
  }
  return out;
}

void ff_backward(const FeedForward& ff, const Matrix& x, const FfCache& cache,
                 const Matrix& out_grad, FeedForward& grads, Matrix* input_grad) {
  check_input(ff, x);
  if (out_grad.rows() != x.rows() || out_grad.cols() != ff.dim_out()) {
    throw DimensionError("ff_backward: output gradient " + out_grad.shape_string() +
                         " does not match batch " + x.shape_string() + " -> " +
                         std::to_string(ff.dim_out()));
  }
  if (cache.pre.rows() != x.rows() || cache.pre.cols() != ff.width()) {
    throw ContractError("ff_backward: cache does not belong to this batch");
  }

  Matrix g_out_w = matmul_at_b(cache.hidden, out_grad);
  auto gw = grads.out_w.values();
  auto gw_new = g_out_w.values();
  for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += gw_new[i];
  accumulate_column_sums(out_grad, grads.out_b);

  Matrix d_hidden = matmul_a_bt(out_grad, ff.out_w);
  {
    auto d = d_hidden.values();
    auto pre = cache.pre.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= activate_derivative(ff.activation, pre[i]);
  }
  Matrix g_in_w = matmul_at_b(x, d_hidden);
  auto gi = grads.in_w.values();
  auto gi_new = g_in_w.values();
  for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += gi_new[i];
  accumulate_column_sums(d_hidden, grads.in_b);

  if (input_grad) *input_grad = matmul_a_bt(d_hidden, ff.in_w);
}

void ff_forward_sample(const FeedForward& ff, std::span<const double> x, std::span<double> hidden,
                       std::span<double> out, simd::MacTally* tally) {
  const auto& k = simd::active();
  const std::size_t width = ff.width();
  const std::size_t dim_out = ff.dim_out();
  std::fill(hidden.begin(), hidden.begin() + width, 0.0);
  for (std::size_t p = 0; p < x.size(); ++p) k.axpy(x[p], ff.in_w.row(p).data(), hidden.data(), width);
  for (std::size_t j = 0; j < width; ++j) hidden[j] += ff.in_b[j];
  if (ff.activation == Activation::relu) {
    k.relu_inplace(hidden.data(), width);
  } else if (ff.activation == Activation::gelu) {
    for (std::size_t j = 0; j < width; ++j) hidden[j] = gelu(hidden[j]);
  }
  std::fill(out.begin(), out.begin() + dim_out, 0.0);
  for (std::size_t j = 0; j < width; ++j) k.axpy(hidden[j], ff.out_w.row(j).data(), out.data(), dim_out);
  for (std::size_t o = 0; o < dim_out; ++o) out[o] += ff.out_b[o];
  if (tally) tally->add(x.size() * width + width * dim_out);
}

std::uint64_t ff_macs_per_sample(std::size_t dim_in, std::size_t width, std::size_t dim_out) {
  return static_cast<std::uint64_t>(width) * (dim_in + dim_out);
}

}  // namespace fffkit
