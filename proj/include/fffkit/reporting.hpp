#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fffkit/bench.hpp"
#include "fffkit/train.hpp"

namespace fffkit {

// Keys: best_M_A, best_G_A, best_validation, ett_MA, ett_GA, epochs_run, and
// with `with_history` an array of {epoch, train_loss, train_accuracy,
// validation_accuracy, learning_rate}.
nlohmann::json train_report_json(const TrainReport& report, bool with_history);

// Keys: kind, dim_in, dim_out, then kind-specific hyperparameters; FFF adds
// training_size, inference_size, training_width, inference_width.
nlohmann::json model_metadata(const Model& model);

inline constexpr const char* kEntropyCsvHeader = "epoch,node_index,mean_entropy";
inline constexpr const char* kBenchCsvHeader =
    "model_kind,depth_or_experts,block_width,training_width,inference_size,mean_us,std_us,macs,"
    "speedup";

void write_entropy_csv(const std::vector<EntropySnapshot>& log, std::ostream& out);
// An empty speedup field means no FF of equal training width was benched.
void write_bench_csv(const BenchReport& rows, std::ostream& out);

// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace fffkit
