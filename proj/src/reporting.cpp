#include "fffkit/reporting.hpp"

#include <charconv>

namespace fffkit {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

nlohmann::json train_report_json(const TrainReport& report, bool with_history) {
  nlohmann::json j;
  j["best_M_A"] = report.best_M_A;
  j["best_G_A"] = report.best_G_A;
  j["best_validation"] = report.best_validation;
  j["ett_MA"] = report.ett_MA;
  j["ett_GA"] = report.ett_GA;
  j["epochs_run"] = report.epochs_run;
  if (with_history) {
    nlohmann::json h = nlohmann::json::array();
    for (const auto& e : report.history) {
      h.push_back({{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"train_accuracy", e.train_accuracy},
                   {"validation_accuracy", e.validation_accuracy},
                   {"learning_rate", e.learning_rate}});
    }
    j["history"] = std::move(h);
  }
  return j;
}

nlohmann::json model_metadata(const Model& model) {
  nlohmann::json j;
  j["kind"] = std::string(layer_kind_name(kind_of(model)));
  j["dim_in"] = model_dim_in(model);
  j["dim_out"] = model_dim_out(model);
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FfModel>) {
          j["width"] = m.params.width();
          j["activation"] = std::string(activation_name(m.params.activation));
        } else if constexpr (std::is_same_v<T, MoeModel>) {
          j["experts"] = m.params.num_experts();
          j["expert_width"] = m.params.expert_width();
          j["k"] = m.params.k;
          j["w_importance"] = m.params.w_importance;
          j["w_load"] = m.params.w_load;
        } else {
          const FffConfig& c = m.config;
          const FffSizes s = fff_sizes(c);
          j["depth"] = c.depth;
          j["node_size"] = c.node_size;
          j["leaf_size"] = c.leaf_size;
          j["hardening"] = c.hardening_coeff;
          j["transpose_prob"] = c.transpose_prob;
          j["training_size"] = s.training_size;
          j["inference_size"] = s.inference_size;
          j["training_width"] = s.training_width;
          j["inference_width"] = s.inference_width;
        }
      },
      model);
  return j;
}

void write_entropy_csv(const std::vector<EntropySnapshot>& log, std::ostream& out) {
  out << kEntropyCsvHeader << '\n';
  for (const auto& snap : log) {
    for (std::size_t t = 0; t < snap.per_node_mean_entropy.size(); ++t) {
      out << snap.epoch << ',' << t << ',' << format_double(snap.per_node_mean_entropy[t]) << '\n';
    }
  }
}

void write_bench_csv(const BenchReport& rows, std::ostream& out) {
  out << kBenchCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.model_kind << ',' << r.depth_or_experts << ',' << r.block_width << ','
        << r.training_width << ',' << r.inference_size << ',' << format_double(r.timing.mean_us)
        << ',' << format_double(r.timing.std_us) << ',' << r.macs << ',';
    if (r.speedup) out << format_double(*r.speedup);
    out << '\n';
  }
}

}  // namespace fffkit
