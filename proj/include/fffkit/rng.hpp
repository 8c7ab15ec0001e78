#pragma once

#include <cstdint>
#include <random>

#include "fffkit/tensor.hpp"

namespace fffkit {

// Seeded generator with a platform-independent stream.
//
// Raw bits come from std::mt19937_64, whose output sequence is fixed by the
// C++ standard. The real-valued draws are derived here rather than through
// <random> distributions, which differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via the Marsaglia polar method.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  // Independent child stream, e.g. one per training repeat.
  Rng fork();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

Matrix gaussian_noise(Rng& rng, std::size_t rows, std::size_t cols);
Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi);

}  // namespace fffkit
