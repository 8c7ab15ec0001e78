#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include "fffkit/bench.hpp"
#include "fffkit/dataset.hpp"
#include "fffkit/model_file.hpp"
#include "fffkit/reporting.hpp"
#include "fffkit/train.hpp"

namespace fffkit::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataOptions {
  std::string dataset = "xor";
  std::string train_path;
  std::string test_path;
  std::string train_labels;
  std::string test_labels;
  std::string data_dir;
  std::size_t samples = 2000;
  double noise = 0.35;
  std::uint64_t data_seed = 1234;

  void add_to(CLI::App& app) {
    app.add_option("--dataset", dataset, "xor | blobs | usps | csv | idx")->capture_default_str();
    app.add_option("--train", train_path, "training file (csv) or images (idx)");
    app.add_option("--test", test_path, "test file (csv) or images (idx)");
    app.add_option("--train-labels", train_labels, "idx training labels");
    app.add_option("--test-labels", test_labels, "idx test labels");
    app.add_option("--data-dir", data_dir,
                   "usps directory with usps_train.csv/usps_test.csv (default $FFFKIT_USPS_DIR or data/usps)");
    app.add_option("--samples", samples, "synthetic train/test sample count")->capture_default_str();
    app.add_option("--noise", noise, "synthetic blob std")->capture_default_str();
    app.add_option("--data-seed", data_seed, "seed for synthetic data and the validation split")
        ->capture_default_str();
  }
};

std::filesystem::path usps_dir(const DataOptions& o) {
  if (!o.data_dir.empty()) return o.data_dir;
  if (const char* env = std::getenv("FFFKIT_USPS_DIR"); env && *env) return env;
  return "data/usps";
}

DatasetSplits load_splits(const DataOptions& o) {
  Dataset full;
  Dataset test;
  if (o.dataset == "xor" || o.dataset == "blobs") {
    Rng rng(o.data_seed);
    auto make = o.dataset == "xor" ? make_xor_quadrants : make_two_blobs;
    full = make(o.samples, o.noise, rng);
    test = make(o.samples, o.noise, rng);
  } else if (o.dataset == "usps") {
    const auto dir = usps_dir(o);
    if (!std::filesystem::exists(dir / "usps_train.csv") || !std::filesystem::exists(dir / "usps_test.csv")) {
      throw std::runtime_error("usps data not found in " + dir.string() +
                               " (expected usps_train.csv and usps_test.csv; see tools/prepare_usps.py)");
    }
    full = load_csv(dir / "usps_train.csv", 10);
    test = load_csv(dir / "usps_test.csv", 10);
  } else if (o.dataset == "csv") {
    if (o.train_path.empty()) throw UsageError("--dataset csv needs --train");
    full = load_csv(o.train_path);
    if (!o.test_path.empty()) test = load_csv(o.test_path, full.num_classes);
  } else if (o.dataset == "idx") {
    if (o.train_path.empty() || o.train_labels.empty()) {
      throw UsageError("--dataset idx needs --train and --train-labels");
    }
    full = load_idx(o.train_path, o.train_labels);
    if (!o.test_path.empty()) {
      if (o.test_labels.empty()) throw UsageError("--test needs --test-labels for idx data");
      test = load_idx(o.test_path, o.test_labels, full.num_classes);
    }
  } else {
    throw UsageError("unknown dataset '" + o.dataset + "'");
  }
  if (test.size() && test.num_classes > full.num_classes) full.num_classes = test.num_classes;
  auto [train, val] = split_train_validation(full, o.data_seed);
  train.num_classes = val.num_classes = full.num_classes;
  return {std::move(train), std::move(val), std::move(test)};
}

const Dataset& pick_split(const DatasetSplits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "validation") return s.validation;
  if (name == "test") return s.test.size() ? s.test : s.validation;
  throw UsageError("unknown split '" + name + "'");
}

struct ArchOptions {
  std::string arch;
  std::size_t depth = 0;
  std::size_t leaf = 1;
  std::size_t node_size = 1;
  std::size_t width = 16;
  std::size_t experts = 2;
  std::size_t expert_width = 8;
  std::size_t k = 2;
  double hardening = 0.0;
  double transpose_prob = 0.05;
  double w_importance = 0.1;
  double w_load = 0.1;
  std::string activation = "relu";

  void add_to(CLI::App& app) {
    app.add_option("--arch", arch, "ff | moe | fff")->required();
    app.add_option("--depth", depth, "fff tree depth")->capture_default_str();
    app.add_option("--leaf", leaf, "fff leaf width")->capture_default_str();
    app.add_option("--node-size", node_size, "fff node width")->capture_default_str();
    app.add_option("--width", width, "ff hidden width")->capture_default_str();
    app.add_option("--experts", experts, "moe expert count")->capture_default_str();
    app.add_option("--expert-width", expert_width, "moe expert width")->capture_default_str();
    app.add_option("--k", k, "moe experts engaged per sample")->capture_default_str();
    app.add_option("--hardening", hardening, "fff hardening loss coefficient")->capture_default_str();
    app.add_option("--transpose-prob", transpose_prob, "fff child transposition probability")
        ->capture_default_str();
    app.add_option("--w-importance", w_importance)->capture_default_str();
    app.add_option("--w-load", w_load)->capture_default_str();
    app.add_option("--activation", activation, "relu | gelu")->capture_default_str();
  }

  Model build(std::size_t dim_in, std::size_t dim_out, Rng& rng) const {
    Activation act;
    if (!parse_activation(activation, act) || act == Activation::none) {
      throw UsageError("unknown activation '" + activation + "'");
    }
    LayerKind kind;
    if (!parse_layer_kind(arch, kind)) throw UsageError("unknown arch '" + arch + "'");
    try {
      switch (kind) {
        case LayerKind::ff: {
          FfConfig c{dim_in, width, dim_out, act};
          return FfModel{c, ff_init(c, rng)};
        }
        case LayerKind::moe: {
          MoeConfig c;
          c.dim_in = dim_in;
          c.dim_out = dim_out;
          c.num_experts = experts;
          c.expert_width = expert_width;
          c.k = k;
          c.w_importance = w_importance;
          c.w_load = w_load;
          c.activation = act;
          return MoeModel{moe_init(c, rng)};
        }
        case LayerKind::fff: {
          FffConfig c;
          c.dim_in = dim_in;
          c.dim_out = dim_out;
          c.depth = depth;
          c.node_size = node_size;
          c.leaf_size = leaf;
          c.hardening_coeff = hardening;
          c.transpose_prob = transpose_prob;
          c.leaf_activation = act;
          c.node_hidden_activation = act;
          return FffModel{c, fff_init(c, rng)};
        }
      }
    } catch (const ContractError& e) {
      throw UsageError(e.what());
    }
    throw UsageError("unknown arch");
  }
};

std::size_t worker_count(std::size_t jobs) {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FFFKIT_THREADS"); env && *env) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) cap = v;
  }
  return std::max<std::size_t>(1, std::min(cap, jobs));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

nlohmann::json entropy_json(const std::vector<EntropySnapshot>& log) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& s : log) {
    a.push_back({{"epoch", s.epoch}, {"overall_mean", s.overall_mean}, {"per_node", s.per_node_mean_entropy}});
  }
  return a;
}

struct RunResult {
  std::uint64_t seed = 0;
  std::optional<TrainReport> report;
  std::string error;
};

int cmd_train(const ArchOptions& arch, const DataOptions& data, const TrainConfig& base_cfg,
              std::uint64_t seed, std::size_t repeats, const std::string& out_path,
              const std::string& report_path, const std::string& entropy_path, bool history,
              std::ostream& out, std::ostream& err) {
  if (arch.arch == "moe" && arch.k < 2) {
    throw UsageError(
        "--arch moe --k " + std::to_string(arch.k) +
        " cannot be trained: with fewer than two engaged experts no gradient reaches the gate");
  }
  if (repeats == 0) throw UsageError("--repeats must be >= 1");
  try {
    base_cfg.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  const DatasetSplits splits = load_splits(data);
  {
    Rng probe(0);
    arch.build(splits.train.dim(), std::max<std::size_t>(splits.train.num_classes, 1), probe);
  }

  std::vector<RunResult> results(repeats);
  std::vector<Model> initial;
  for (std::size_t i = 0; i < repeats; ++i) {
    results[i].seed = seed + i;
    Rng rng(results[i].seed);
    initial.push_back(arch.build(splits.train.dim(), splits.train.num_classes, rng));
  }
  auto work = [&](std::size_t i) {
    TrainConfig cfg = base_cfg;
    cfg.seed = results[i].seed;
    try {
      results[i].report = train(initial[i], splits, cfg);
    } catch (const std::exception& e) {
      results[i].error = e.what();
    }
  };
  const std::size_t workers = worker_count(repeats);
  if (workers == 1) {
    for (std::size_t i = 0; i < repeats; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < repeats;) work(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  std::optional<std::size_t> best;
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t i = 0; i < repeats; ++i) {
    nlohmann::json r{{"run", i}, {"seed", results[i].seed}};
    if (!results[i].report) {
      r["error"] = results[i].error;
      err << "run " << i << " (seed " << results[i].seed << ") failed: " << results[i].error << '\n';
    } else {
      r["report"] = train_report_json(*results[i].report, history);
      const TrainReport& cur = *results[i].report;
      if (!best) {
        best = i;
      } else {
        const TrainReport& b = *results[*best].report;
        if (cur.best_validation > b.best_validation ||
            (cur.best_validation == b.best_validation && cur.ett_GA < b.ett_GA)) {
          best = i;
        }
      }
    }
    runs.push_back(std::move(r));
  }

  nlohmann::json doc;
  doc["metadata"] = model_metadata(initial.front());
  doc["metadata"]["dataset"] = data.dataset;
  doc["metadata"]["train_samples"] = splits.train.size();
  doc["metadata"]["validation_samples"] = splits.validation.size();
  doc["metadata"]["test_samples"] = splits.test.size();
  doc["runs"] = std::move(runs);
  if (!best) {
    out << doc.dump(2) << '\n';
    return kFailure;
  }
  const TrainReport& b = *results[*best].report;
  doc["best_run"] = *best;
  doc["best"] = train_report_json(b, history);
  doc["best"]["seed"] = results[*best].seed;
  doc["best"]["entropy_log"] = entropy_json(b.entropy_log);
  out << doc.dump(2) << '\n';

  if (!report_path.empty()) write_text(report_path, doc.dump(2) + "\n");
  if (!entropy_path.empty()) {
    std::ostringstream csv;
    write_entropy_csv(b.entropy_log, csv);
    write_text(entropy_path, csv.str());
  }
  if (!out_path.empty()) save_model(b.best_model, out_path);
  return kOk;
}

int cmd_eval(const std::string& model_path, const DataOptions& data, const std::string& split,
             const std::string& mode_name, std::ostream& out) {
  EvalMode mode;
  if (mode_name == "train-forward") mode = EvalMode::train_forward;
  else if (mode_name == "infer-forward") mode = EvalMode::infer_forward;
  else throw UsageError("unknown --mode '" + mode_name + "' (train-forward | infer-forward)");
  const Model model = load_model(model_path);
  const DatasetSplits splits = load_splits(data);
  const Dataset& ds = pick_split(splits, split);
  if (ds.dim() != model_dim_in(model)) {
    throw std::runtime_error("model expects " + std::to_string(model_dim_in(model)) + " inputs, data has " +
                             std::to_string(ds.dim()));
  }
  nlohmann::json j{{"accuracy", evaluate(model, ds, mode)},
                   {"mode", mode_name},
                   {"split", split},
                   {"samples", ds.size()},
                   {"metadata", model_metadata(model)}};
  out << j.dump(2) << '\n';
  return kOk;
}

std::vector<std::size_t> parse_sweep(const std::string& text) {
  std::vector<std::size_t> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    try {
      if (dash == std::string::npos) {
        v.push_back(std::stoul(item));
      } else {
        const std::size_t lo = std::stoul(item.substr(0, dash));
        const std::size_t hi = std::stoul(item.substr(dash + 1));
        if (hi < lo) throw UsageError("bad sweep range '" + item + "'");
        for (std::size_t d = lo; d <= hi; ++d) v.push_back(d);
      }
    } catch (const std::logic_error&) {
      throw UsageError("bad --sweep entry '" + item + "'");
    }
  }
  if (v.empty()) throw UsageError("--sweep is empty");
  return v;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"fffkit: fast feedforward layers, baselines, training and benchmarks", "fffkit"};
  app.require_subcommand(1);

  ArchOptions arch;
  DataOptions data;
  TrainConfig tcfg;
  std::string optimizer = "sgd";
  std::string stop_on = "validation";
  std::uint64_t seed = 0;
  std::size_t repeats = 1;
  std::string out_path, report_path, entropy_path;
  bool history = false;
  auto* train_cmd = app.add_subcommand("train", "train one or more seeds and report the best run");
  arch.add_to(*train_cmd);
  data.add_to(*train_cmd);
  train_cmd->add_option("--seed", seed, "seed of the first run; run i uses seed + i")->capture_default_str();
  train_cmd->add_option("--repeats", repeats, "number of runs")->capture_default_str();
  train_cmd->add_option("--optimizer", optimizer, "sgd | adam")->capture_default_str();
  train_cmd->add_option("--lr", tcfg.optimizer.learning_rate)->capture_default_str();
  train_cmd->add_option("--batch", tcfg.batch_size)->capture_default_str();
  train_cmd->add_option("--epochs", tcfg.max_epochs)->capture_default_str();
  train_cmd->add_option("--patience", tcfg.early_stop_patience, "early stop patience (epochs)")
      ->capture_default_str();
  train_cmd->add_option("--lr-halving", tcfg.lr_halving_patience,
                        "halve the learning rate after this many epochs without training improvement (0 off)")
      ->capture_default_str();
  train_cmd->add_option("--stop-on", stop_on, "validation | training")->capture_default_str();
  train_cmd->add_option("--out", out_path, "save the best model here");
  train_cmd->add_option("--report", report_path, "also write the JSON report here");
  train_cmd->add_option("--entropy-out", entropy_path, "write the best run's entropy log CSV here");
  train_cmd->add_flag("--history", history, "include per-epoch history in the report");

  std::string model_path, split = "test", mode = "infer-forward";
  DataOptions eval_data;
  auto* eval_cmd = app.add_subcommand("eval", "accuracy of a saved model");
  eval_cmd->add_option("--model", model_path)->required();
  eval_data.add_to(*eval_cmd);
  eval_cmd->add_option("--split", split, "train | validation | test")->capture_default_str();
  eval_cmd->add_option("--mode", mode, "train-forward | infer-forward")->capture_default_str();

  BenchSpec spec;
  std::string sweep_text = "1-10";
  std::string bench_out;
  auto* bench_cmd = app.add_subcommand("bench", "inference timing sweep over ff, moe and fff");
  bench_cmd->add_option("--dim-in", spec.dim_in)->capture_default_str();
  bench_cmd->add_option("--dim-out", spec.dim_out)->capture_default_str();
  bench_cmd->add_option("--batch", spec.batch)->capture_default_str();
  bench_cmd->add_option("--repeats", spec.repeats, "forward passes per model, warmup included")
      ->capture_default_str();
  bench_cmd->add_option("--warmup", spec.warmup)->capture_default_str();
  bench_cmd->add_option("--block", spec.block_width, "leaf and expert width")->capture_default_str();
  bench_cmd->add_option("--sweep", sweep_text, "exponents, e.g. 1-10 or 1,3,5")->capture_default_str();
  bench_cmd->add_option("--ff-max", spec.ff_max_exponent, "largest exponent with an ff row")
      ->capture_default_str();
  bench_cmd->add_option("--k", spec.moe_k, "moe experts engaged per sample")->capture_default_str();
  bench_cmd->add_option("--seed", spec.seed)->capture_default_str();
  bench_cmd->add_option("--out", bench_out, "write CSV here instead of stdout");

  std::string entropy_report, entropy_out;
  auto* entropy_cmd = app.add_subcommand("entropy", "entropy log CSV from a train report");
  entropy_cmd->add_option("--report", entropy_report, "JSON written by train --report")->required();
  entropy_cmd->add_option("--out", entropy_out, "write CSV here instead of stdout");

  std::vector<std::string> argv_store{"fffkit"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*train_cmd) {
      if (!parse_optimizer(optimizer, tcfg.optimizer.kind)) throw UsageError("unknown optimizer '" + optimizer + "'");
      if (stop_on == "validation") tcfg.stop_on = StopOn::validation;
      else if (stop_on == "training") tcfg.stop_on = StopOn::training;
      else throw UsageError("unknown --stop-on '" + stop_on + "'");
      return cmd_train(arch, data, tcfg, seed, repeats, out_path, report_path, entropy_path, history, out,
                       err);
    }
    if (*eval_cmd) return cmd_eval(model_path, eval_data, split, mode, out);
    if (*bench_cmd) {
      spec.sweep = parse_sweep(sweep_text);
      try {
        spec.validate();
      } catch (const ContractError& e) {
        throw UsageError(e.what());
      }
      pin_current_thread();
      const BenchReport rows = sweep(spec);
      std::ostringstream csv;
      write_bench_csv(rows, csv);
      if (bench_out.empty()) out << csv.str();
      else write_text(bench_out, csv.str());
      return kOk;
    }
    if (*entropy_cmd) {
      const auto doc = nlohmann::json::parse(read_text(entropy_report));
      std::vector<EntropySnapshot> log;
      for (const auto& s : doc.at("best").at("entropy_log")) {
        EntropySnapshot snap;
        snap.epoch = s.at("epoch").get<std::size_t>();
        snap.overall_mean = s.at("overall_mean").get<double>();
        snap.per_node_mean_entropy = s.at("per_node").get<std::vector<double>>();
        log.push_back(std::move(snap));
      }
      std::ostringstream csv;
      write_entropy_csv(log, csv);
      if (entropy_out.empty()) out << csv.str();
      else write_text(entropy_out, csv.str());
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace fffkit::cli
