#include "fffkit/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <numeric>
#include <sstream>

namespace fffkit {

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features = gather_rows(features, rows);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(labels.at(r));
  out.num_classes = num_classes;
  return out;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t off) {
  if (off + 4 > buf.size()) throw ParseError("truncated IDX header", off);
  return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) |
         (std::uint32_t{buf[off + 2]} << 8) | std::uint32_t{buf[off + 3]};
}

std::size_t type_width(std::uint8_t code, std::size_t offset) {
  switch (code) {
    case 0x08:
    case 0x09:
      return 1;
    case 0x0B:
      return 2;
    case 0x0C:
    case 0x0D:
      return 4;
    case 0x0E:
      return 8;
    default:
      throw ParseError("unknown IDX element type 0x" + std::to_string(code), offset);
  }
}

template <typename T>
T load_be(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v = (v << 8) | p[i];
  if constexpr (std::is_same_v<T, float>) {
    return std::bit_cast<float>(static_cast<std::uint32_t>(v));
  } else if constexpr (std::is_same_v<T, double>) {
    return std::bit_cast<double>(v);
  } else {
    using U = std::make_unsigned_t<T>;
    return static_cast<T>(static_cast<U>(v));
  }
}

}  // namespace

IdxArray read_idx(const std::filesystem::path& path) {
  const auto buf = read_file(path);
  if (buf.size() < 4) throw ParseError("truncated IDX header", buf.size());
  if (buf[0] != 0 || buf[1] != 0) throw ParseError("bad IDX magic", 0);
  IdxArray arr;
  arr.type_code = buf[2];
  const std::size_t width = type_width(arr.type_code, 2);
  const std::size_t rank = buf[3];
  if (rank == 0) throw ParseError("IDX array of rank 0", 3);
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    arr.dims.push_back(read_be32(buf, 4 + 4 * i));
    count *= arr.dims.back();
  }
  const std::size_t data_off = 4 + 4 * rank;
  if (buf.size() < data_off + count * width) {
    throw ParseError("truncated IDX payload: expected " + std::to_string(count * width) +
                         " bytes, found " + std::to_string(buf.size() - data_off),
                     buf.size());
  }
  arr.values.resize(count);
  const unsigned char* p = buf.data() + data_off;
  for (std::size_t i = 0; i < count; ++i, p += width) {
    switch (arr.type_code) {
      case 0x08:
        arr.values[i] = *p;
        break;
      case 0x09:
        arr.values[i] = static_cast<std::int8_t>(*p);
        break;
      case 0x0B:
        arr.values[i] = load_be<std::int16_t>(p);
        break;
      case 0x0C:
        arr.values[i] = load_be<std::int32_t>(p);
        break;
      case 0x0D:
        arr.values[i] = load_be<float>(p);
        break;
      case 0x0E:
        arr.values[i] = load_be<double>(p);
        break;
    }
  }
  return arr;
}

void write_idx(const std::filesystem::path& path, const IdxArray& array) {
  if (array.type_code != 0x08 && array.type_code != 0x0E) {
    throw std::invalid_argument("write_idx supports ubyte (0x08) and float64 (0x0E) only");
  }
  std::vector<unsigned char> buf{0, 0, array.type_code, static_cast<unsigned char>(array.dims.size())};
  for (std::uint32_t d : array.dims) {
    for (int s = 24; s >= 0; s -= 8) buf.push_back(static_cast<unsigned char>(d >> s));
  }
  for (double v : array.values) {
    if (array.type_code == 0x08) {
      buf.push_back(static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L)));
    } else {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int s = 56; s >= 0; s -= 8) buf.push_back(static_cast<unsigned char>(bits >> s));
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

namespace {

std::size_t resolve_classes(const std::vector<std::uint32_t>& labels, std::size_t num_classes,
                            const std::function<std::uint64_t(std::size_t)>& offset_of) {
  if (num_classes == 0) {
    std::uint32_t mx = 0;
    for (auto l : labels) mx = std::max(mx, l);
    return labels.empty() ? 0 : mx + 1;
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw ParseError("label " + std::to_string(labels[i]) + " out of range for " +
                           std::to_string(num_classes) + " classes",
                       offset_of(i));
    }
  }
  return num_classes;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t num_classes) {
  IdxArray img = read_idx(images);
  IdxArray lab = read_idx(labels);
  if (img.dims.empty()) throw ParseError("image IDX has no dimensions", 3);
  if (lab.dims.size() != 1) throw ParseError("label IDX must be one-dimensional", 3);
  if (lab.dims[0] != img.dims[0]) {
    throw ParseError("image count " + std::to_string(img.dims[0]) + " != label count " +
                         std::to_string(lab.dims[0]),
                     4);
  }
  if (img.type_code != 0x08 && img.type_code != 0x0D && img.type_code != 0x0E) {
    throw ParseError("image IDX must hold ubyte or float pixels", 2);
  }
  const std::size_t n = img.dims[0];
  std::size_t dim = 1;
  for (std::size_t i = 1; i < img.dims.size(); ++i) dim *= img.dims[i];
  Dataset ds;
  ds.features = Matrix(n, dim, std::move(img.values));
  if (img.type_code == 0x08) {
    for (double& v : ds.features.values()) v /= 255.0;
  }
  ds.labels.reserve(n);
  const std::size_t label_off = 8;
  const std::size_t label_width = type_width(lab.type_code, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = lab.values[i];
    if (v < 0 || v != std::floor(v)) {
      throw ParseError("non-integral or negative label", label_off + i * label_width);
    }
    ds.labels.push_back(static_cast<std::uint32_t>(v));
  }
  ds.num_classes = resolve_classes(ds.labels, num_classes,
                                   [&](std::size_t i) { return label_off + i * label_width; });
  return ds;
}

void save_idx(const Dataset& ds, const std::filesystem::path& images,
              const std::filesystem::path& labels) {
  IdxArray img;
  img.type_code = 0x0E;
  img.dims = {static_cast<std::uint32_t>(ds.size()), static_cast<std::uint32_t>(ds.dim())};
  img.values.assign(ds.features.values().begin(), ds.features.values().end());
  write_idx(images, img);
  IdxArray lab;
  lab.type_code = 0x08;
  lab.dims = {static_cast<std::uint32_t>(ds.size())};
  for (auto l : ds.labels) {
    if (l > 255) throw std::invalid_argument("save_idx: labels above 255 need a wider type");
    lab.values.push_back(l);
  }
  write_idx(labels, lab);
}

namespace {

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<double> values;
  std::vector<std::uint32_t> labels;
  std::vector<std::uint64_t> label_lines;
  std::size_t dim = 0;
  std::string line;
  std::uint64_t line_no = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    double label;
    if (!parse_double(fields[0], label)) {
      if (first_content) {
        first_content = false;
        continue;  // header
      }
      throw ParseError("non-numeric label in " + path.string(), line_no);
    }
    first_content = false;
    if (label < 0 || label != std::floor(label)) {
      throw ParseError("label must be a non-negative integer", line_no);
    }
    if (fields.size() < 2) throw ParseError("row has no pixel columns", line_no);
    if (dim == 0) dim = fields.size() - 1;
    if (fields.size() - 1 != dim) {
      throw ParseError("row has " + std::to_string(fields.size() - 1) + " pixels, expected " +
                           std::to_string(dim),
                       line_no);
    }
    for (std::size_t i = 1; i < fields.size(); ++i) {
      double v;
      if (!parse_double(fields[i], v) || !std::isfinite(v)) {
        throw ParseError("bad pixel value in column " + std::to_string(i), line_no);
      }
      values.push_back(v);
    }
    labels.push_back(static_cast<std::uint32_t>(label));
    label_lines.push_back(line_no);
  }
  if (labels.empty()) throw ParseError("empty dataset: " + path.string(), 0);

  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const double mn = *mn_it;
  const double mx = *mx_it;
  if (mn >= 0.0 && mx <= 1.0) {
    // already scaled
  } else if (mn >= 0.0 && mx <= 255.0) {
    for (double& v : values) v /= 255.0;
  } else {
    const double span = mx - mn;
    for (double& v : values) v = span > 0 ? (v - mn) / span : 0.0;
  }

  Dataset ds;
  const std::size_t n = labels.size();
  ds.features = Matrix(n, dim, std::move(values));
  ds.labels = std::move(labels);
  ds.num_classes =
      resolve_classes(ds.labels, num_classes, [&](std::size_t i) { return label_lines[i]; });
  return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[32];
  for (std::size_t r = 0; r < ds.size(); ++r) {
    out << ds.labels[r];
    for (double v : ds.features.row(r)) {
      auto res = std::to_chars(buf, buf + sizeof buf, v);
      out << ',';
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
}

std::pair<Dataset, Dataset> split_train_validation(const Dataset& full, std::uint64_t seed) {
  std::vector<std::size_t> order(full.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const std::size_t n_val = full.size() / 10;
  const std::size_t n_train = full.size() - n_val;
  std::span<const std::size_t> all(order);
  return {full.subset(all.first(n_train)), full.subset(all.subspan(n_train))};
}

Dataset make_xor_quadrants(std::size_t n, double sigma, Rng& rng) {
  Dataset ds;
  ds.features = Matrix(n, 2);
  ds.labels.resize(n);
  ds.num_classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t blob = i % 4;
    const double cx = (blob & 1) ? 1.0 : -1.0;
    const double cy = (blob & 2) ? 1.0 : -1.0;
    ds.features(i, 0) = cx + sigma * rng.normal();
    ds.features(i, 1) = cy + sigma * rng.normal();
    ds.labels[i] = ((cx > 0) != (cy > 0)) ? 1 : 0;
  }
  return ds;
}

Dataset make_two_blobs(std::size_t n, double sigma, Rng& rng) {
  Dataset ds;
  ds.features = Matrix(n, 2);
  ds.labels.resize(n);
  ds.num_classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t label = i % 2;
    ds.features(i, 0) = (label ? 2.0 : -2.0) + sigma * rng.normal();
    ds.features(i, 1) = sigma * rng.normal();
    ds.labels[i] = label;
  }
  return ds;
}

}  // namespace fffkit
