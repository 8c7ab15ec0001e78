#pragma once

// Reference implementations written independently of the library code paths:
// plain loops, recursion and sorting, no shared helpers beyond the data types.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fffkit/feedforward.hpp"
#include "fffkit/fff.hpp"
#include "fffkit/rng.hpp"
#include "fffkit/tensor.hpp"

namespace oracle {

using fffkit::FeedForward;
using fffkit::FffConfig;
using fffkit::FffParams;
using fffkit::Matrix;

Matrix naive_matmul(const Matrix& a, const Matrix& b);

double logistic(double z);
double act(fffkit::Activation a, double x);

// One sample through a <dim_in, width, dim_out> block.
std::vector<double> ff_sample(const FeedForward& ff, std::span<const double> x);
Matrix ff_batch(const FeedForward& ff, const Matrix& x);

// Soft tree evaluation by recursion from the root. `flip(b, t)` swaps the
// children's shares of node t for sample b.
Matrix recursive_forward_t(const FffParams& p, const FffConfig& cfg, const Matrix& x,
                           const std::function<bool(std::size_t, std::size_t)>& flip = {});
// Hard descent by recursion; also reports the leaf reached.
Matrix recursive_forward_i(const FffParams& p, const FffConfig& cfg, const Matrix& x,
                           std::vector<std::size_t>* leaves = nullptr);

// k largest by (value desc, index asc) via a full sort.
std::vector<std::size_t> sorted_top_k(std::span<const double> v, std::size_t k);
// Softmax over the selected entries, zeros elsewhere.
std::vector<double> sorted_top_k_gates(std::span<const double> v, std::size_t k);

// (f(p + h) - f(p - h)) / 2h, restoring p.
double central_difference(const std::function<double()>& f, double& p, double h);

// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-3);

// Every parameter ~ U(-scale, scale), biases included.
FffParams random_fff(const FffConfig& cfg, fffkit::Rng& rng, double scale = 1.0);

// Bernoulli entropy in bits, by definition.
double entropy_bits(double p);

}  // namespace oracle
