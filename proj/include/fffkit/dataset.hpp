#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fffkit/rng.hpp"
#include "fffkit/tensor.hpp"

namespace fffkit {

// Malformed dataset file. `offset` is the byte (IDX) or line (CSV) position.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

struct Dataset {
  Matrix features;  // N x dim; the file loaders scale pixels to [0, 1]
  std::vector<std::uint32_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }
  Dataset subset(std::span<const std::size_t> rows) const;
};

struct DatasetSplits {
  Dataset train;
  Dataset validation;
  Dataset test;
};

struct IdxArray {
  std::uint8_t type_code = 0;  // 0x08 ubyte, 0x09 sbyte, 0x0B i16, 0x0C i32, 0x0D f32, 0x0E f64
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
};

IdxArray read_idx(const std::filesystem::path& path);
// Big-endian IDX with the given type code (0x08 or 0x0E supported for writing).
void write_idx(const std::filesystem::path& path, const IdxArray& array);

// Image/label IDX pair. ubyte pixels are divided by 255; float pixels are
// taken as is. num_classes = 0 infers max label + 1; otherwise a label
// >= num_classes is a parse error.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t num_classes = 0);
void save_idx(const Dataset& ds, const std::filesystem::path& images,
              const std::filesystem::path& labels);

// Rows of `label,pixel,pixel,...`; an optional non-numeric header line is
// skipped. Pixels already in [0, 1] are kept, pixels in [0, 255] are divided
// by 255, anything else is min-max rescaled over the whole file.
Dataset load_csv(const std::filesystem::path& path, std::size_t num_classes = 0);
// Full round-trip precision.
void save_csv(const Dataset& ds, const std::filesystem::path& path);

// Seeded shuffle; the last floor(N / 10) samples become validation.
std::pair<Dataset, Dataset> split_train_validation(const Dataset& full, std::uint64_t seed);

// Four Gaussian blobs centred at (+-1, +-1); label 1 where exactly one
// coordinate of the centre is positive.
Dataset make_xor_quadrants(std::size_t n, double sigma, Rng& rng);
// Two well separated blobs at (-2, 0) and (2, 0).
Dataset make_two_blobs(std::size_t n, double sigma, Rng& rng);

}  // namespace fffkit
