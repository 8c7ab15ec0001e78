#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "fffkit/reporting.hpp"

using namespace fffkit;

namespace {

std::string golden(const std::string& name) {
  std::ifstream f(std::string(FFFKIT_GOLDEN_DIR) + "/" + name);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> keys(const nlohmann::json& j) {
  std::vector<std::string> k;
  for (auto it = j.begin(); it != j.end(); ++it) k.push_back(it.key());
  return k;
}

}  // namespace

TEST(Reporting, CsvHeadersMatchGoldenFiles) {
  EXPECT_EQ(std::string(kBenchCsvHeader) + "\n", golden("bench_header.csv"));
  EXPECT_EQ(std::string(kEntropyCsvHeader) + "\n", golden("entropy_header.csv"));
}

TEST(Reporting, TrainReportKeysMatchSchema) {
  const auto schema = nlohmann::json::parse(golden("report_schema.json"));
  TrainReport r;
  r.history.push_back({1, 0.5, 50, 60, 0.2});
  EXPECT_EQ(keys(train_report_json(r, false)), schema["train_report"].get<std::vector<std::string>>());
  auto with = train_report_json(r, true);
  EXPECT_EQ(keys(with), schema["train_report_with_history"].get<std::vector<std::string>>());
  EXPECT_EQ(keys(with["history"][0]), schema["history_entry"].get<std::vector<std::string>>());
}

TEST(Reporting, EntropyCsvRows) {
  std::vector<EntropySnapshot> log(2);
  log[0] = {{0.5, 0.25}, 0.375, 1};
  log[1] = {{0.125, 0.0625}, 0.09375, 2};
  std::ostringstream out;
  write_entropy_csv(log, out);
  EXPECT_EQ(out.str(), golden("entropy_header.csv") + "1,0,0.5\n1,1,0.25\n2,0,0.125\n2,1,0.0625\n");
}

TEST(Reporting, BenchCsvBlankSpeedup) {
  BenchRow r;
  r.model_kind = "fff";
  r.depth_or_experts = 3;
  r.block_width = 32;
  r.training_width = 256;
  r.inference_size = 35;
  r.timing.mean_us = 12.5;
  r.timing.std_us = 0.5;
  r.macs = 1000;
  std::ostringstream out;
  write_bench_csv({r}, out);
  EXPECT_EQ(out.str(), golden("bench_header.csv") + "fff,3,32,256,35,12.5,0.5,1000,\n");
  r.speedup = 4.0;
  out.str("");
  write_bench_csv({r}, out);
  EXPECT_NE(out.str().find(",1000,4\n"), std::string::npos);
}

TEST(Reporting, FffMetadataCarriesSizes) {
  FffConfig c;
  c.dim_in = 256;
  c.dim_out = 10;
  c.depth = 4;
  c.leaf_size = 8;
  Model m = FffModel{c, fff_zeros(c)};
  auto j = model_metadata(m);
  EXPECT_EQ(j["inference_size"], 12);
  EXPECT_EQ(j["training_size"], 15 + 128);
  EXPECT_EQ(j["kind"], "fff");
}

TEST(Reporting, ShortestDoubleFormat) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0 / 3.0), "0.3333333333333333");
  EXPECT_EQ(std::stod(format_double(2.0 / 7.0)), 2.0 / 7.0);
}
