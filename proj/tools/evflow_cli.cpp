// evflow: generate synthetic bead-transit datasets, preprocess them, and run
// the leave-one-experiment-out training protocol.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "evflow/harness.hpp"
#include "json.hpp"

namespace {

using namespace evflow;

struct PipelineOptions {
  std::string data;
  std::string cache;
  PreprocessOptions preprocess;
  NetworkConfig network;
  TrainConfig train;
};

void add_preprocess_flags(CLI::App* cmd, PreprocessOptions& p) {
  cmd->add_option("--dt-us", p.dt_us, "temporal bin width in microseconds")->capture_default_str();
  cmd->add_option("--beta", p.lif.beta, "LIF filter decay")->capture_default_str();
  cmd->add_option("--w", p.lif.weight, "LIF filter input weight")->capture_default_str();
  cmd->add_option("--u-thr", p.lif.threshold, "LIF filter threshold")->capture_default_str();
  cmd->add_option("--t-rf", p.lif.refractory, "refractory period in steps")->capture_default_str();
}

void add_pipeline_flags(CLI::App* cmd, PipelineOptions& o) {
  cmd->add_option("--data", o.data, "dataset directory")->required();
  cmd->add_option("--cache", o.cache, "raster cache directory");
  add_preprocess_flags(cmd, o.preprocess);
  cmd->add_option("--epochs", o.train.epochs)->capture_default_str();
  cmd->add_option("--seed", o.train.seed)->capture_default_str();
  cmd->add_option("--batch-size", o.train.batch_size)->capture_default_str();
  cmd->add_option("--lr", o.train.learning_rate)->capture_default_str();
  cmd->add_option("--rate-correct", o.train.rate_correct)->capture_default_str();
  cmd->add_option("--rate-incorrect", o.train.rate_incorrect)->capture_default_str();
  cmd->add_option("--threads", o.train.threads, "worker threads (results are unaffected)")
      ->capture_default_str();
  cmd->add_option("--hidden", o.network.layer_sizes[1], "hidden layer size")->capture_default_str();
  cmd->add_option("--net-beta", o.network.beta)->capture_default_str();
  cmd->add_option("--net-u-thr", o.network.threshold)->capture_default_str();
  cmd->add_option("--slope", o.network.surrogate_slope, "surrogate slope k")->capture_default_str();
  cmd->add_option("--reset", o.network.reset, "reset mode")
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, ResetMode>{{"subtract", ResetMode::subtract},
                                           {"zero", ResetMode::zero}}));
}

std::vector<PreparedSample> load_prepared(const PipelineOptions& o) {
  std::optional<RasterCache> cache;
  if (!o.cache.empty()) cache.emplace(o.cache);
  return prepare_directory(o.data, o.preprocess, cache ? &*cache : nullptr);
}

void log_epoch(int split, const EpochMetrics& m) {
  std::fprintf(stderr, "split %d epoch %2d  loss %.5f  train %.4f  test %.4f  (%.1fs)\n", split,
               m.epoch, m.loss, m.train_accuracy, m.test_accuracy, m.seconds);
}

int run_gen(const std::string& out, std::uint64_t seed, std::size_t per_class, bool paper_scale,
            const std::string& config_path) {
  const GenConfig config = config_path.empty() ? GenConfig{} : load_gen_config(config_path);
  const std::size_t n = paper_scale ? kPaperScalePerClass : per_class;
  const Manifest m = generate_dataset_to(out, config, n, seed);
  std::size_t total = 0;
  for (const ManifestEntry& e : m.entries) total += e.count;
  std::printf("wrote %zu samples in %zu recordings to %s\n", total, m.entries.size(), out.c_str());
  return 0;
}

int run_preprocess(const std::string& data, const std::string& out, const PreprocessOptions& p) {
  RasterCache cache(out);
  const Manifest manifest = read_manifest(data);
  nlohmann::json index = nlohmann::json::array();
  for (const ManifestEntry& entry : manifest.entries) {
    const auto samples = load_entry(data, manifest, entry);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      cache.get_or_compute(samples[i], p);
      index.push_back({{"experiment", entry.experiment_id},
                       {"label", std::string(to_string(entry.label))},
                       {"index", i},
                       {"raster", cache.path_for(samples[i], p).filename().string()}});
    }
  }
  const nlohmann::json j{{"dt_us", p.dt_us},
                         {"beta", p.lif.beta},
                         {"w", p.lif.weight},
                         {"u_thr", p.lif.threshold},
                         {"t_rf", p.lif.refractory},
                         {"rasters", index}};
  std::ofstream(std::filesystem::path(out) / "index.json") << j.dump(1) << '\n';
  std::printf("%zu rasters (%zu cached, %zu computed) in %s\n", index.size(), cache.hits(),
              cache.misses(), out.c_str());
  return 0;
}

int run_train(const PipelineOptions& o, int test_exp, const std::string& out) {
  if (test_exp < 1 || test_exp > kNumExperiments) {
    throw std::invalid_argument("--test-exp must be in 1..4");
  }
  const auto samples = load_prepared(o);
  const auto splits = make_splits(samples);
  Network<Real> net;
  const SplitResult result =
      run_split(samples, splits[test_exp - 1], o.network, o.train, &net, log_epoch);
  std::filesystem::path ckpt = out;
  ckpt.replace_extension(".ckpt.json");
  save_checkpoint(net, ckpt);
  ResultsTable table{{result}};
  nlohmann::json j = nlohmann::json::parse(results_to_json(table));
  j["checkpoint"] = ckpt.filename().string();
  j["seed"] = o.train.seed;
  std::ofstream(out) << j.dump(1) << '\n';
  std::printf("test experiment %d: final train %.4f test %.4f\n", test_exp,
              result.epochs.back().train_accuracy, result.epochs.back().test_accuracy);
  return 0;
}

int run_loeo(const PipelineOptions& o, const std::string& out, bool timing) {
  const auto samples = load_prepared(o);
  ResultsTable table = run_experiment(samples, o.network, o.train, log_epoch);
  if (!timing) {
    for (auto& s : table.splits) {
      for (auto& m : s.epochs) m.seconds = 0.0;
    }
  }
  const bool json = std::filesystem::path(out).extension() == ".json";
  export_results(table, out, json ? ResultsFormat::json : ResultsFormat::csv);
  std::printf("mean final train %.4f  mean final test %.4f\n", table.mean_final_train(),
              table.mean_final_test());
  return 0;
}

int run_report(const std::string& in, const std::string& out) {
  const ResultsTable table = read_results(in);
  std::ofstream file(out, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("cannot write " + out);
  file << curves_csv(table);
  std::printf("%zu curve points written to %s\n", table.rows(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-based flow cytometry with spiking neural networks"};
  app.require_subcommand(1);

  std::string gen_out, gen_config;
  std::uint64_t gen_seed = 0;
  std::size_t gen_per_class = kDeskScalePerClass;
  bool paper_scale = false;
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--seed", gen_seed)->capture_default_str();
  gen->add_option("--samples-per-class-per-exp", gen_per_class)->capture_default_str();
  gen->add_flag("--paper-scale", paper_scale, "6000 samples per class and experiment");
  gen->add_option("--config", gen_config, "generator config (JSON)");

  std::string pre_data, pre_out;
  PreprocessOptions pre_opts;
  auto* pre = app.add_subcommand("preprocess", "write SPKR rasters for every sample");
  pre->add_option("--data", pre_data)->required();
  pre->add_option("--out", pre_out)->required();
  add_preprocess_flags(pre, pre_opts);

  PipelineOptions train_opts;
  int test_exp = 1;
  std::string train_out;
  auto* train = app.add_subcommand("train", "train and evaluate one split");
  add_pipeline_flags(train, train_opts);
  train->add_option("--test-exp", test_exp)->required();
  train->add_option("--out", train_out)->required();

  PipelineOptions loeo_opts;
  std::string loeo_out;
  bool timing = false;
  auto* loeo = app.add_subcommand("loeo", "run all four leave-one-experiment-out splits");
  add_pipeline_flags(loeo, loeo_opts);
  loeo->add_option("--out", loeo_out)->required();
  loeo->add_flag("--timing", timing, "record wall-clock seconds (output no longer reproducible)");

  std::string rep_in, rep_out;
  auto* report = app.add_subcommand("report", "per-epoch accuracy curves from a results file");
  report->add_option("--in", rep_in)->required();
  report->add_option("--out", rep_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return run_gen(gen_out, gen_seed, gen_per_class, paper_scale, gen_config);
    if (*pre) return run_preprocess(pre_data, pre_out, pre_opts);
    if (*train) return run_train(train_opts, test_exp, train_out);
    if (*loeo) return run_loeo(loeo_opts, loeo_out, timing);
    if (*report) return run_report(rep_in, rep_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "evflow: error: %s\n", e.what());
    return 1;
  }
  return 1;
}
