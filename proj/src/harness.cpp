#include "evflow/harness.hpp"

#include <algorithm>
#include <bit>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace evflow {

namespace {

constexpr std::uint64_t kInitTag = 0x1417;
constexpr std::uint64_t kShuffleTag = 0x5487;

bool same_bits(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

std::vector<Split> make_splits(std::span<const int> experiment_ids) {
  std::vector<Split> splits;
  for (int k = 1; k <= kNumExperiments; ++k) {
    Split split;
    split.test_experiment = k;
    for (std::size_t i = 0; i < experiment_ids.size(); ++i) {
      const int id = experiment_ids[i];
      if (id < 1 || id > kNumExperiments) {
        throw std::invalid_argument("sample " + std::to_string(i) + " has experiment id " +
                                    std::to_string(id) + " outside 1..4");
      }
      (id == k ? split.test : split.train).push_back(i);
    }
    if (split.test.empty()) {
      throw std::invalid_argument("experiment " + std::to_string(k) + " has no samples");
    }
    splits.push_back(std::move(split));
  }
  return splits;
}

std::vector<Split> make_splits(const Dataset& dataset) {
  std::vector<int> ids;
  ids.reserve(dataset.samples.size());
  for (const EventSample& s : dataset.samples) ids.push_back(s.experiment_id);
  return make_splits(ids);
}

std::vector<Split> make_splits(std::span<const PreparedSample> samples) {
  std::vector<int> ids;
  ids.reserve(samples.size());
  for (const PreparedSample& s : samples) ids.push_back(s.experiment_id);
  return make_splits(ids);
}

RasterCache::RasterCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path RasterCache::path_for(const EventSample& sample,
                                            const PreprocessOptions& opts) const {
  const LifFilterParams& p = opts.lif;
  const std::uint64_t key = mix_seed(
      sample_hash(sample),
      {opts.dt_us, std::bit_cast<std::uint64_t>(p.beta), std::bit_cast<std::uint64_t>(p.weight),
       std::bit_cast<std::uint64_t>(p.threshold), static_cast<std::uint64_t>(p.refractory)});
  char name[32];
  std::snprintf(name, sizeof name, "%016" PRIx64 ".spkr", key);
  return dir_ / name;
}

SpikeRaster RasterCache::get_or_compute(const EventSample& sample, const PreprocessOptions& opts) {
  const std::filesystem::path path = path_for(sample, opts);
  if (std::filesystem::exists(path)) {
    ++hits_;
    return read_raster(path);
  }
  ++misses_;
  SpikeRaster raster = preprocess_sample(sample, opts.dt_us, opts.lif);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  write_raster(raster, tmp);
  std::filesystem::rename(tmp, path);
  return raster;
}

PreparedSample prepare_sample(const EventSample& sample, const PreprocessOptions& opts,
                              RasterCache* cache) {
  const SpikeRaster raster =
      cache ? cache->get_or_compute(sample, opts) : preprocess_sample(sample, opts.dt_us, opts.lif);
  return {{SparseRaster::from(raster), label_index(sample.label)}, sample.experiment_id};
}

std::vector<PreparedSample> prepare_samples(std::span<const EventSample> samples,
                                            const PreprocessOptions& opts, RasterCache* cache) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const EventSample& s : samples) out.push_back(prepare_sample(s, opts, cache));
  return out;
}

std::vector<PreparedSample> prepare_directory(const std::filesystem::path& dir,
                                              const PreprocessOptions& opts, RasterCache* cache) {
  const Manifest manifest = read_manifest(dir);
  std::vector<PreparedSample> out;
  for (const ManifestEntry& entry : manifest.entries) {
    const std::vector<EventSample> samples = load_entry(dir, manifest, entry);
    for (const EventSample& s : samples) out.push_back(prepare_sample(s, opts, cache));
  }
  return out;
}

bool operator==(const SplitResult& a, const SplitResult& b) {
  if (a.test_experiment != b.test_experiment || a.epochs.size() != b.epochs.size()) return false;
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    const EpochMetrics& x = a.epochs[i];
    const EpochMetrics& y = b.epochs[i];
    if (x.epoch != y.epoch || !same_bits(x.loss, y.loss) ||
        !same_bits(x.train_accuracy, y.train_accuracy) ||
        !same_bits(x.test_accuracy, y.test_accuracy) || !same_bits(x.seconds, y.seconds)) {
      return false;
    }
  }
  return true;
}

bool operator==(const ResultsTable& a, const ResultsTable& b) { return a.splits == b.splits; }

double ResultsTable::mean_final_train() const {
  double sum = 0.0;
  for (const SplitResult& s : splits) sum += s.epochs.back().train_accuracy;
  return sum / static_cast<double>(splits.size());
}

double ResultsTable::mean_final_test() const {
  double sum = 0.0;
  for (const SplitResult& s : splits) sum += s.epochs.back().test_accuracy;
  return sum / static_cast<double>(splits.size());
}

std::size_t ResultsTable::rows() const {
  std::size_t n = 0;
  for (const SplitResult& s : splits) n += s.epochs.size();
  return n;
}

std::uint64_t split_init_seed(std::uint64_t master, int test_experiment) {
  return mix_seed(master, {kInitTag, static_cast<std::uint64_t>(test_experiment)});
}

std::uint64_t split_train_seed(std::uint64_t master, int test_experiment) {
  return mix_seed(master, {kShuffleTag, static_cast<std::uint64_t>(test_experiment)});
}

SplitResult run_split(std::span<const PreparedSample> samples, const Split& split,
                      const NetworkConfig& net_config, const TrainConfig& train_config,
                      Network<Real>* trained, const EpochCallback& on_epoch) {
  train_config.validate();
  std::vector<TrainingSample> train, test;
  train.reserve(split.train.size());
  test.reserve(split.test.size());
  for (std::size_t i : split.train) train.push_back(samples[i].input);
  for (std::size_t i : split.test) test.push_back(samples[i].input);

  Network<Real> net =
      init_network<Real>(net_config, split_init_seed(train_config.seed, split.test_experiment));
  AdamState<Real> state = AdamState<Real>::for_network(net);
  TrainConfig config = train_config;
  config.seed = split_train_seed(train_config.seed, split.test_experiment);

  SplitResult result;
  result.test_experiment = split.test_experiment;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochMetrics m = train_epoch<Real>(net, train, config, state, epoch);
    m.test_accuracy = test.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : evaluate<Real>(net, test, config.threads);
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_epoch) on_epoch(split.test_experiment, m);
    result.epochs.push_back(m);
  }
  if (trained) *trained = std::move(net);
  return result;
}

ResultsTable run_experiment(std::span<const PreparedSample> samples,
                            const NetworkConfig& net_config, const TrainConfig& train_config,
                            const EpochCallback& on_epoch) {
  ResultsTable table;
  for (const Split& split : make_splits(samples)) {
    table.splits.push_back(
        run_split(samples, split, net_config, train_config, nullptr, on_epoch));
  }
  return table;
}

ResultsTable run_experiment(const Dataset& dataset, const PreprocessOptions& preprocess,
                            const NetworkConfig& net_config, const TrainConfig& train_config,
                            RasterCache* cache, const EpochCallback& on_epoch) {
  const std::vector<PreparedSample> prepared = prepare_samples(dataset.samples, preprocess, cache);
  return run_experiment(prepared, net_config, train_config, on_epoch);
}

std::string results_to_csv(const ResultsTable& table) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const SplitResult& s : table.splits) {
    for (const EpochMetrics& m : s.epochs) {
      out += std::to_string(s.test_experiment) + "," + std::to_string(m.epoch) + "," +
             format_number(m.loss) + "," + format_number(m.train_accuracy) + "," +
             format_number(m.test_accuracy) + "," + format_number(m.seconds) + "\n";
    }
  }
  return out;
}

ResultsTable results_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) {
    throw std::runtime_error("results CSV: unexpected header");
  }
  ResultsTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
    if (cells.size() != 6) {
      throw std::runtime_error("results CSV line " + std::to_string(line_no) + ": expected 6 fields");
    }
    const int split = std::stoi(cells[0]);
    EpochMetrics m;
    m.epoch = std::stoi(cells[1]);
    m.loss = std::stod(cells[2]);
    m.train_accuracy = std::stod(cells[3]);
    m.test_accuracy = std::stod(cells[4]);
    m.seconds = std::stod(cells[5]);
    if (table.splits.empty() || table.splits.back().test_experiment != split) {
      table.splits.push_back({split, {}});
    }
    table.splits.back().epochs.push_back(m);
  }
  return table;
}

std::string results_to_json(const ResultsTable& table) {
  nlohmann::json splits = nlohmann::json::array();
  for (const SplitResult& s : table.splits) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const EpochMetrics& m : s.epochs) {
      epochs.push_back({{"epoch", m.epoch},
                        {"train_loss", m.loss},
                        {"train_acc", m.train_accuracy},
                        {"test_acc", m.test_accuracy},
                        {"seconds", m.seconds}});
    }
    splits.push_back({{"split", s.test_experiment}, {"epochs", epochs}});
  }
  nlohmann::json j{{"splits", splits}};
  if (!table.splits.empty()) {
    j["summary"] = {{"mean_final_train_acc", table.mean_final_train()},
                    {"mean_final_test_acc", table.mean_final_test()}};
  }
  return j.dump(1) + "\n";
}

ResultsTable results_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ResultsTable table;
  for (const auto& sj : j.at("splits")) {
    SplitResult s;
    s.test_experiment = sj.at("split").get<int>();
    for (const auto& ej : sj.at("epochs")) {
      EpochMetrics m;
      m.epoch = ej.at("epoch").get<int>();
      m.loss = ej.at("train_loss").get<double>();
      m.train_accuracy = ej.at("train_acc").get<double>();
      m.test_accuracy = ej.at("test_acc").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                     : ej.at("test_acc").get<double>();
      m.seconds = ej.at("seconds").get<double>();
      s.epochs.push_back(m);
    }
    table.splits.push_back(std::move(s));
  }
  return table;
}

void export_results(const ResultsTable& table, const std::filesystem::path& path,
                    ResultsFormat format) {
  write_text(path, format == ResultsFormat::csv ? results_to_csv(table) : results_to_json(table));
}

ResultsTable read_results(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  return path.extension() == ".json" ? results_from_json(text) : results_from_csv(text);
}

std::string curves_csv(const ResultsTable& table) {
  std::string out = "epoch,split,train_acc,test_acc\n";
  for (const SplitResult& s : table.splits) {
    for (const EpochMetrics& m : s.epochs) {
      out += std::to_string(m.epoch) + "," + std::to_string(s.test_experiment) + "," +
             format_number(m.train_accuracy) + "," + format_number(m.test_accuracy) + "\n";
    }
  }
  return out;
}

}  // namespace evflow
