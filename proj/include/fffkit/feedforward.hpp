#pragma once

// The <dim_in, width, dim_out> feedforward block: one hidden layer of `width`
// neurons. Used directly as the FF baseline and as the FFF leaf / MoE expert.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "fffkit/rng.hpp"
#include "fffkit/simd/kernels.hpp"
#include "fffkit/tensor.hpp"

namespace fffkit {

enum class Activation : std::uint8_t { relu = 0, gelu = 1, none = 2 };

std::string_view activation_name(Activation a);
bool parse_activation(std::string_view name, Activation& out);
double activate(Activation a, double x) noexcept;
double activate_derivative(Activation a, double pre) noexcept;

struct FfConfig {
  std::size_t dim_in = 0;
  std::size_t width = 0;
  std::size_t dim_out = 0;
  Activation activation = Activation::relu;

  void validate() const;
  friend bool operator==(const FfConfig&, const FfConfig&) = default;
};

struct FeedForward {
  Matrix in_w;                // dim_in x width
  std::vector<double> in_b;   // width
  Matrix out_w;               // width x dim_out
  std::vector<double> out_b;  // dim_out
  Activation activation = Activation::relu;

  std::size_t dim_in() const noexcept { return in_w.rows(); }
  std::size_t width() const noexcept { return in_w.cols(); }
  std::size_t dim_out() const noexcept { return out_w.cols(); }

  friend bool operator==(const FeedForward&, const FeedForward&) = default;
};

FeedForward ff_zeros(const FfConfig& cfg);
FeedForward ff_zeros_like(const FeedForward& ff);
// Weights ~ U(-sqrt(1/fan_in), sqrt(1/fan_in)), biases zero. Draw order:
// in_w row-major, then out_w row-major.
FeedForward ff_init(const FfConfig& cfg, Rng& rng);

std::vector<std::span<double>> parameter_views(FeedForward& ff);
std::vector<std::span<const double>> parameter_views(const FeedForward& ff);

struct FfCache {
  Matrix pre;     // B x width, before the activation
  Matrix hidden;  // B x width, after
};

// Batched forward. Fills `cache` when given.
Matrix ff_forward(const FeedForward& ff, const Matrix& x, FfCache* cache = nullptr);

// Gradients of <out_grad, ff(x)> w.r.t. the parameters, accumulated into
// `grads`. Writes d/dx into `input_grad` when given.
void ff_backward(const FeedForward& ff, const Matrix& x, const FfCache& cache,
                 const Matrix& out_grad, FeedForward& grads, Matrix* input_grad = nullptr);

// Single-sample forward through the active SIMD kernels. `hidden` is scratch
// of length width(). Same accumulation schedule as ff_forward, so results are
// bit-identical to the corresponding row of the batched pass.
void ff_forward_sample(const FeedForward& ff, std::span<const double> x, std::span<double> hidden,
                       std::span<double> out, simd::MacTally* tally = nullptr);

// MACs issued by one ff_forward_sample.
std::uint64_t ff_macs_per_sample(std::size_t dim_in, std::size_t width, std::size_t dim_out);

}  // namespace fffkit
