#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "fffkit/simd/kernels.hpp"

namespace fffkit::simd {

#if !defined(FFFKIT_HAVE_AVX2)
const KernelTable* avx2_kernels() { return nullptr; }
#endif

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(__i386__)
      return avx2_kernels() != nullptr && __builtin_cpu_supports("avx2") &&
             __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa detect_isa() { return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar; }

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool parse_isa(std::string_view name, Isa& out) {
  if (name == "scalar") {
    out = Isa::scalar;
    return true;
  }
  if (name == "avx2") {
    out = Isa::avx2;
    return true;
  }
  return false;
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("kernel variant '" + std::string(isa_name(isa)) +
                                "' is not available on this CPU/build");
  }
  return isa == Isa::avx2 ? *avx2_kernels() : scalar_kernels();
}

namespace {

const KernelTable* initial_table() {
  Isa isa = detect_isa();
  if (const char* env = std::getenv("FFFKIT_ISA")) {
    Isa requested;
    if (parse_isa(env, requested) && isa_supported(requested)) isa = requested;
  }
  return &kernels_for(isa);
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{initial_table()};
  return slot;
}

}  // namespace

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

void set_active(Isa isa) { active_slot().store(&kernels_for(isa), std::memory_order_release); }

}  // namespace fffkit::simd
