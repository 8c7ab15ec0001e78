#include "fffkit/simd/kernels.hpp"

namespace fffkit::simd {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void relu_scalar(double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] > 0.0 ? y[i] : 0.0;
}

constexpr KernelTable kScalar{Isa::scalar, dot_scalar, axpy_scalar, relu_scalar};

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

}  // namespace fffkit::simd
