#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fffkit/dataset.hpp"

using namespace fffkit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("fffkit_ds_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

std::vector<std::uint8_t> idx_header(std::uint8_t type, std::vector<std::uint32_t> dims) {
  std::vector<std::uint8_t> b{0, 0, type, static_cast<std::uint8_t>(dims.size())};
  for (auto d : dims)
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(d >> s));
  return b;
}

Dataset small_set() {
  Dataset d;
  d.features = Matrix{{0, 0.25, 1}, {0.5, 0.5, 0.5}, {1, 0, 0.125}, {0.3, 0.7, 0.9}, {0.1, 0.2, 0.3}};
  d.labels = {0, 1, 2, 1, 0};
  d.num_classes = 3;
  return d;
}

}  // namespace

TEST(Idx, ParsesUbyteImagesAndLabels) {
  TempDir dir;
  auto img = idx_header(0x08, {10, 28, 28});
  for (int i = 0; i < 10 * 28 * 28; ++i) img.push_back(static_cast<std::uint8_t>(i % 256));
  auto lab = idx_header(0x08, {10});
  for (int i = 0; i < 10; ++i) lab.push_back(static_cast<std::uint8_t>(i));
  write_bytes(dir.path / "img", img);
  write_bytes(dir.path / "lab", lab);
  Dataset d = load_idx(dir.path / "img", dir.path / "lab");
  EXPECT_EQ(d.features.rows(), 10u);
  EXPECT_EQ(d.features.cols(), 784u);
  EXPECT_EQ(d.num_classes, 10u);
  EXPECT_DOUBLE_EQ(d.features(0, 255), 1.0);
  EXPECT_DOUBLE_EQ(d.features(0, 1), 1.0 / 255);
  EXPECT_EQ(d.labels[7], 7u);
}

TEST(Idx, ReadsWiderTypesBigEndian) {
  TempDir dir;
  auto bytes = idx_header(0x0C, {2});
  for (std::uint8_t v : {0x00, 0x00, 0x01, 0x02, 0xFF, 0xFF, 0xFF, 0xFE}) bytes.push_back(v);
  write_bytes(dir.path / "a", bytes);
  IdxArray a = read_idx(dir.path / "a");
  EXPECT_EQ(a.type_code, 0x0C);
  EXPECT_EQ(a.values, (std::vector<double>{258, -2}));
}

TEST(Idx, ErrorsCarryByteOffsets) {
  TempDir dir;
  write_bytes(dir.path / "magic", {0, 1, 8, 1, 0, 0, 0, 1, 5});
  try {
    read_idx(dir.path / "magic");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  auto trunc = idx_header(0x08, {4});
  trunc.push_back(1);
  write_bytes(dir.path / "trunc", trunc);
  try {
    read_idx(dir.path / "trunc");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 9u);
  }
  auto img = idx_header(0x08, {2, 2});
  for (int i = 0; i < 4; ++i) img.push_back(0);
  auto lab = idx_header(0x08, {2});
  lab.push_back(1);
  lab.push_back(7);
  write_bytes(dir.path / "img", img);
  write_bytes(dir.path / "lab", lab);
  try {
    load_idx(dir.path / "img", dir.path / "lab", 3);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 9u);
  }
  EXPECT_THROW(read_idx(dir.path / "missing"), std::runtime_error);
}

TEST(Idx, RoundTrip) {
  TempDir dir;
  Dataset d = small_set();
  save_idx(d, dir.path / "i", dir.path / "l");
  Dataset back = load_idx(dir.path / "i", dir.path / "l");
  EXPECT_EQ(back.features, d.features);
  EXPECT_EQ(back.labels, d.labels);
}

TEST(Csv, RoundTripIsExact) {
  TempDir dir;
  Dataset d = small_set();
  d.features(3, 1) = 1.0 / 3.0;
  save_csv(d, dir.path / "d.csv");
  Dataset back = load_csv(dir.path / "d.csv");
  EXPECT_EQ(back.features, d.features);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.num_classes, 3u);
}

TEST(Csv, ScalingHeaderAndErrors) {
  TempDir dir;
  write_text(dir.path / "px.csv", "label,a,b\n1,0,255\n0,51,102\n");
  Dataset px = load_csv(dir.path / "px.csv");
  EXPECT_EQ(px.features, (Matrix{{0, 1}, {0.2, 0.4}}));
  write_text(dir.path / "mm.csv", "0,-1,1\n1,0,3\n");
  Dataset mm = load_csv(dir.path / "mm.csv");
  EXPECT_EQ(mm.features, (Matrix{{0, 0.5}, {0.25, 1}}));

  write_text(dir.path / "empty.csv", "");
  try {
    load_csv(dir.path / "empty.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("empty"), std::string::npos);
  }
  write_text(dir.path / "ragged.csv", "0,1,2\n1,2\n");
  EXPECT_THROW(load_csv(dir.path / "ragged.csv"), ParseError);
  write_text(dir.path / "label.csv", "0,0.1\n5,0.2\n");
  try {
    load_csv(dir.path / "label.csv", 3);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 2u);
  }
}

TEST(Split, NineToOneAndSeeded) {
  Rng rng(1);
  Dataset full = make_xor_quadrants(105, 0.2, rng);
  auto [tr, va] = split_train_validation(full, 5);
  EXPECT_EQ(tr.size(), 95u);
  EXPECT_EQ(va.size(), 10u);
  auto [tr2, va2] = split_train_validation(full, 5);
  EXPECT_EQ(tr.features, tr2.features);
  EXPECT_EQ(va.labels, va2.labels);
  auto [tr3, va3] = split_train_validation(full, 6);
  EXPECT_NE(tr.features, tr3.features);
}

TEST(Synthetic, XorQuadrantLabels) {
  Rng rng(2);
  Dataset d = make_xor_quadrants(400, 0.05, rng);
  EXPECT_EQ(d.num_classes, 2u);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool expect = (d.features(i, 0) > 0) != (d.features(i, 1) > 0);
    agree += (d.labels[i] == 1) == expect;
  }
  EXPECT_EQ(agree, d.size());
  Dataset b = make_two_blobs(100, 0.3, rng);
  EXPECT_EQ(b.dim(), 2u);
  Rng a1(3), a2(3);
  EXPECT_EQ(make_xor_quadrants(20, 0.3, a1).features, make_xor_quadrants(20, 0.3, a2).features);
}

TEST(DatasetSubset, SelectsRows) {
  Dataset d = small_set();
  std::vector<std::size_t> rows{4, 1};
  Dataset s = d.subset(rows);
  EXPECT_EQ(s.labels, (std::vector<std::uint32_t>{0, 1}));
  EXPECT_EQ(s.features(1, 0), 0.5);
  EXPECT_EQ(s.num_classes, 3u);
}
