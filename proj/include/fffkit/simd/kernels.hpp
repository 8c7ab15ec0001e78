#pragma once

// Inner-loop kernels with a scalar reference and SIMD variants.
//
// The active table is resolved once from the CPU's capabilities; FFFKIT_ISA
// (scalar | avx2) in the environment forces a specific variant.
//
// axpy is bit-identical across variants (one multiply then one add per lane,
// same order per element). dot reassociates in the SIMD variants and only
// agrees with the reference to rounding error.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace fffkit::simd {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y[i] = max(y[i], 0)
  void (*relu_inplace)(double* y, std::size_t n);
};

const KernelTable& scalar_kernels();
// nullptr when the variant was not compiled in.
const KernelTable* avx2_kernels();

bool isa_supported(Isa isa);
Isa detect_isa();
std::string_view isa_name(Isa isa);
bool parse_isa(std::string_view name, Isa& out);

const KernelTable& kernels_for(Isa isa);
const KernelTable& active();
// Throws std::invalid_argument if the ISA is not supported on this CPU.
void set_active(Isa isa);

// Counts multiply-accumulates actually issued by an instrumented pass.
struct MacTally {
  std::uint64_t macs = 0;
  void add(std::uint64_t n) noexcept { macs += n; }
};

}  // namespace fffkit::simd
