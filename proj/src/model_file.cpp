#include "fffkit/model_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fffkit/crc32.hpp"

namespace fffkit {

namespace {

constexpr std::uint8_t kMagic[4] = {'F', 'F', 'F', 'K'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void tensors(const std::vector<std::span<const double>>& views) {
    for (auto v : views) {
      u64(v.size());
      for (double x : v) f64(x);
    }
  }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  void put(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : in_(bytes) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::size_t size() {
    const std::uint64_t v = u64();
    if (v > (std::uint64_t{1} << 40)) fail("implausible size " + std::to_string(v));
    return static_cast<std::size_t>(v);
  }
  Activation activation() {
    const std::uint8_t v = u8();
    if (v > static_cast<std::uint8_t>(Activation::none)) fail("unknown activation tag");
    return static_cast<Activation>(v);
  }
  void tensors(const std::vector<std::span<double>>& views) {
    for (auto v : views) {
      const std::uint64_t n = u64();
      if (n != v.size()) {
        fail("tensor holds " + std::to_string(n) + " values, config implies " +
             std::to_string(v.size()));
      }
      for (double& x : v) x = f64();
    }
  }
  // Refuses configs whose parameters could not fit in the rest of the file,
  // before anything is allocated for them.
  void require_values(double count) const {
    if (count * 8.0 > static_cast<double>(in_.size() - pos_)) fail("config larger than file");
  }
  std::size_t position() const { return pos_; }
  [[noreturn]] void fail(const std::string& what) const {
    throw ModelFileError("model file: " + what + " at byte " + std::to_string(pos_));
  }

 private:
  std::uint64_t get(int width) {
    if (in_.size() - pos_ < static_cast<std::size_t>(width)) fail("truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

double ff_values(std::size_t dim_in, std::size_t width, std::size_t dim_out) {
  const double w = static_cast<double>(width);
  return w * static_cast<double>(dim_in) + w + w * static_cast<double>(dim_out) +
         static_cast<double>(dim_out);
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const Model& model) {
  Writer w;
  for (std::uint8_t c : kMagic) w.u8(c);
  w.u16(kModelFileVersion);
  w.u8(static_cast<std::uint8_t>(kind_of(model)));
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FfModel>) {
          w.u64(m.params.dim_in());
          w.u64(m.params.width());
          w.u64(m.params.dim_out());
          w.u8(static_cast<std::uint8_t>(m.params.activation));
        } else if constexpr (std::is_same_v<T, MoeModel>) {
          const MoeConfig c = m.params.config();
          w.u64(c.dim_in);
          w.u64(c.dim_out);
          w.u64(c.num_experts);
          w.u64(c.expert_width);
          w.u64(c.k);
          w.f64(c.w_importance);
          w.f64(c.w_load);
          w.u8(static_cast<std::uint8_t>(c.activation));
        } else {
          const FffConfig& c = m.config;
          w.u64(c.dim_in);
          w.u64(c.dim_out);
          w.u64(c.depth);
          w.u64(c.node_size);
          w.u64(c.leaf_size);
          w.f64(c.hardening_coeff);
          w.f64(c.transpose_prob);
          w.u8(static_cast<std::uint8_t>(c.entropy_base));
          w.u8(static_cast<std::uint8_t>(c.leaf_activation));
          w.u8(static_cast<std::uint8_t>(c.node_hidden_activation));
        }
        w.tensors(parameter_views(m.params));
      },
      model);
  const std::uint32_t crc = crc32(w.bytes());
  w.u32(crc);
  return std::move(w.bytes());
}

Model deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 2 + 1 + 4) throw ModelFileError("model file: truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw ModelFileError("model file: bad magic");
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body.size() + i]) << (8 * i);
  if (crc32(body) != stored) throw ModelFileError("model file: CRC mismatch");

  Reader r(body);
  for (int i = 0; i < 4; ++i) r.u8();
  const std::uint16_t version = r.u16();
  if (version != kModelFileVersion) {
    throw ModelFileError("model file: unsupported version " + std::to_string(version));
  }
  const std::uint8_t tag = r.u8();
  Model model;
  try {
    switch (tag) {
      case static_cast<std::uint8_t>(LayerKind::ff): {
        FfConfig c;
        c.dim_in = r.size();
        c.width = r.size();
        c.dim_out = r.size();
        c.activation = r.activation();
        c.validate();
        r.require_values(ff_values(c.dim_in, c.width, c.dim_out));
        FfModel m{c, ff_zeros(c)};
        r.tensors(parameter_views(m.params));
        model = std::move(m);
        break;
      }
      case static_cast<std::uint8_t>(LayerKind::moe): {
        MoeConfig c;
        c.dim_in = r.size();
        c.dim_out = r.size();
        c.num_experts = r.size();
        c.expert_width = r.size();
        c.k = r.size();
        c.w_importance = r.f64();
        c.w_load = r.f64();
        c.activation = r.activation();
        c.validate();
        r.require_values(static_cast<double>(c.num_experts) *
                         (ff_values(c.dim_in, c.expert_width, c.dim_out) + 2.0 * c.dim_in));
        MoeModel m{moe_zeros(c)};
        r.tensors(parameter_views(m.params));
        model = std::move(m);
        break;
      }
      case static_cast<std::uint8_t>(LayerKind::fff): {
        FffConfig c;
        c.dim_in = r.size();
        c.dim_out = r.size();
        c.depth = r.size();
        c.node_size = r.size();
        c.leaf_size = r.size();
        c.hardening_coeff = r.f64();
        c.transpose_prob = r.f64();
        const std::uint8_t base = r.u8();
        if (base > 1) r.fail("unknown entropy base");
        c.entropy_base = static_cast<EntropyBase>(base);
        c.leaf_activation = r.activation();
        c.node_hidden_activation = r.activation();
        c.validate();
        r.require_values(static_cast<double>(c.num_nodes()) * ff_values(c.dim_in, c.node_size, 1) +
                         static_cast<double>(c.num_leaves()) *
                             ff_values(c.dim_in, c.leaf_size, c.dim_out));
        FffModel m{c, fff_zeros(c)};
        r.tensors(parameter_views(m.params));
        model = std::move(m);
        break;
      }
      default:
        r.fail("unknown layer kind " + std::to_string(tag));
    }
  } catch (const ContractError& e) {
    throw ModelFileError(std::string("model file: invalid config: ") + e.what());
  }
  if (r.position() != body.size()) r.fail("trailing bytes");
  return model;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace fffkit
