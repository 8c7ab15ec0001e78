#pragma once

// Binary model file, all integers and reals little-endian:
//
//   "FFFK"            4 bytes
//   version           u16 (currently 1)
//   kind              u8  (0 ff, 1 moe, 2 fff)
//   config block      kind-specific, below
//   parameter blocks  per tensor: u64 element count, then f64 values
//   crc32             u32 over every preceding byte
//
// Config blocks:
//   ff   u64 dim_in, width, dim_out; u8 activation
//   moe  u64 dim_in, dim_out, num_experts, expert_width, k;
//        f64 w_importance, w_load; u8 activation
//   fff  u64 dim_in, dim_out, depth, node_size, leaf_size;
//        f64 hardening_coeff, transpose_prob;
//        u8 entropy_base, leaf_activation, node_hidden_activation
//
// Tensor order:
//   ff   in_w, in_b, out_w, out_b
//   moe  each expert (as ff), then gate_weights, noise_weights
//   fff  each node (as ff, level order), then each leaf (as ff, left to right)

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "fffkit/train.hpp"

namespace fffkit {

inline constexpr std::uint16_t kModelFileVersion = 1;

class ModelFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> serialize_model(const Model& model);
Model deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace fffkit
