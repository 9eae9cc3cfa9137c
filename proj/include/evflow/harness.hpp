#pragma once

// Leave-one-experiment-out protocol: splits, per-split training runs,
// preprocessing cache and results tables.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "evflow/preprocess.hpp"
#include "evflow/snn.hpp"
#include "evflow/synthgen.hpp"
#include "evflow/train.hpp"

namespace evflow {

struct PreprocessOptions {
  std::uint64_t dt_us = kDefaultBinUs;
  LifFilterParams lif;
};

struct PreparedSample {
  TrainingSample input;
  int experiment_id = 1;
};

struct Split {
  int test_experiment = 1;
  std::vector<std::size_t> train;  // indices into the sample list
  std::vector<std::size_t> test;
};

/// One split per experiment id in 1..4; throws if an experiment has no samples.
std::vector<Split> make_splits(std::span<const int> experiment_ids);
std::vector<Split> make_splits(const Dataset& dataset);
std::vector<Split> make_splits(std::span<const PreparedSample> samples);

/// Disk cache of SPKR rasters keyed by (sample hash, dt, LIF parameters).
/// Entries are written to a temporary file and renamed into place.
class RasterCache {
 public:
  explicit RasterCache(std::filesystem::path dir);

  std::filesystem::path path_for(const EventSample& sample, const PreprocessOptions& opts) const;
  SpikeRaster get_or_compute(const EventSample& sample, const PreprocessOptions& opts);

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::filesystem::path dir_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

PreparedSample prepare_sample(const EventSample& sample, const PreprocessOptions& opts,
                              RasterCache* cache = nullptr);
std::vector<PreparedSample> prepare_samples(std::span<const EventSample> samples,
                                            const PreprocessOptions& opts,
                                            RasterCache* cache = nullptr);
/// Loads and preprocesses a dataset directory one recording at a time.
std::vector<PreparedSample> prepare_directory(const std::filesystem::path& dir,
                                              const PreprocessOptions& opts,
                                              RasterCache* cache = nullptr);

using Real = double;

struct SplitResult {
  int test_experiment = 1;
  std::vector<EpochMetrics> epochs;

  friend bool operator==(const SplitResult&, const SplitResult&);
};

struct ResultsTable {
  std::vector<SplitResult> splits;

  double mean_final_train() const;
  double mean_final_test() const;
  std::size_t rows() const;
  friend bool operator==(const ResultsTable&, const ResultsTable&);
};

using EpochCallback = std::function<void(int test_experiment, const EpochMetrics&)>;

/// Per-split seeds derived from the master training seed.
std::uint64_t split_init_seed(std::uint64_t master, int test_experiment);
std::uint64_t split_train_seed(std::uint64_t master, int test_experiment);

/// Trains a fresh network on split.train for config.epochs epochs, evaluating
/// on split.test after each one.
SplitResult run_split(std::span<const PreparedSample> samples, const Split& split,
                      const NetworkConfig& net_config, const TrainConfig& train_config,
                      Network<Real>* trained = nullptr, const EpochCallback& on_epoch = {});

ResultsTable run_experiment(std::span<const PreparedSample> samples,
                            const NetworkConfig& net_config, const TrainConfig& train_config,
                            const EpochCallback& on_epoch = {});

ResultsTable run_experiment(const Dataset& dataset, const PreprocessOptions& preprocess,
                            const NetworkConfig& net_config, const TrainConfig& train_config,
                            RasterCache* cache = nullptr, const EpochCallback& on_epoch = {});

enum class ResultsFormat { csv, json };

inline constexpr const char* kResultsHeader = "split,epoch,train_loss,train_acc,test_acc,seconds";

/// CSV rows: split (test experiment), epoch (1-based), loss, accuracies,
/// seconds; numbers printed with round-trip precision.
std::string results_to_csv(const ResultsTable& table);
ResultsTable results_from_csv(const std::string& text);
std::string results_to_json(const ResultsTable& table);
ResultsTable results_from_json(const std::string& text);

void export_results(const ResultsTable& table, const std::filesystem::path& path,
                    ResultsFormat format = ResultsFormat::csv);
/// Reads CSV or JSON (chosen by the .json extension).
ResultsTable read_results(const std::filesystem::path& path);

/// "epoch,split,train_acc,test_acc" rows, ordered by split then epoch.
std::string curves_csv(const ResultsTable& table);

}  // namespace evflow
