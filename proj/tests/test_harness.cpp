#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "evflow/harness.hpp"

using namespace evflow;

namespace {

std::vector<PreparedSample> toy_samples(std::size_t per_exp, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::bernoulli_distribution on(0.5);
  std::vector<PreparedSample> out;
  for (int exp = 1; exp <= kNumExperiments; ++exp) {
    for (std::size_t i = 0; i < per_exp; ++i) {
      const int label = static_cast<int>(i % 2);
      BitMatrix bits = BitMatrix::Zero(8, 12);
      for (int t = 0; t < 8; ++t) {
        for (int c = 0; c < 6; ++c) bits(t, label * 6 + c) = on(gen);
      }
      out.push_back({{SparseRaster::from_dense(bits), label}, exp});
    }
  }
  return out;
}

NetworkConfig toy_config() {
  NetworkConfig c;
  c.layer_sizes = {12, 8, 4};
  c.neurons_per_class = 2;
  return c;
}

TrainConfig quick_train() {
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 16;
  tc.learning_rate = 5e-3;
  tc.seed = 12;
  return tc;
}

}  // namespace

TEST(Splits, ExactPartitionOverRandomAssignments) {
  std::mt19937_64 gen(2);
  std::uniform_int_distribution<int> exp(1, kNumExperiments);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> ids(40 + trial);
    for (int& id : ids) id = exp(gen);
    for (int k = 1; k <= kNumExperiments; ++k) ids[k - 1] = k;  // every experiment present
    std::shuffle(ids.begin(), ids.end(), gen);
    const auto splits = make_splits(ids);
    ASSERT_EQ(splits.size(), 4u);
    std::vector<int> times_tested(ids.size(), 0);
    for (const Split& s : splits) {
      std::set<std::size_t> all(s.train.begin(), s.train.end());
      all.insert(s.test.begin(), s.test.end());
      EXPECT_EQ(all.size(), ids.size());
      EXPECT_EQ(s.train.size() + s.test.size(), ids.size());
      for (std::size_t i : s.test) {
        EXPECT_EQ(ids[i], s.test_experiment);
        ++times_tested[i];
      }
      for (std::size_t i : s.train) EXPECT_NE(ids[i], s.test_experiment);
    }
    EXPECT_TRUE(std::all_of(times_tested.begin(), times_tested.end(), [](int t) { return t == 1; }));
  }
}

TEST(Splits, RejectsMissingOrUnknownExperiments) {
  EXPECT_THROW(make_splits(std::vector<int>{1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(make_splits(std::vector<int>{1, 2, 3, 4, 5}), std::invalid_argument);
}

TEST(Splits, FromDataset) {
  const Dataset d = generate_dataset(GenConfig{}, 2, 1);
  const auto splits = make_splits(d);
  for (const Split& s : splits) EXPECT_EQ(s.test.size(), 4u);
}

TEST(RunSplit, TestSetNeverInfluencesTraining) {
  const auto samples = toy_samples(40, 3);
  const auto splits = make_splits(samples);
  Network<Real> a, b;
  const SplitResult ra = run_split(samples, splits[1], toy_config(), quick_train(), &a);

  auto altered = samples;
  for (std::size_t i : splits[1].test) {
    altered[i].input.label = 1 - altered[i].input.label;
    altered[i].input.raster = SparseRaster::from_dense(BitMatrix::Ones(8, 12));
  }
  const SplitResult rb = run_split(altered, splits[1], toy_config(), quick_train(), &b);
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    EXPECT_EQ(a.layers[l].weights, b.layers[l].weights);
    EXPECT_EQ(a.layers[l].bias, b.layers[l].bias);
  }
  for (std::size_t e = 0; e < ra.epochs.size(); ++e) {
    EXPECT_EQ(ra.epochs[e].loss, rb.epochs[e].loss);
    EXPECT_EQ(ra.epochs[e].train_accuracy, rb.epochs[e].train_accuracy);
  }
}

TEST(RunExperiment, ShapeAndDeterminism) {
  const auto samples = toy_samples(30, 4);
  int calls = 0;
  ResultsTable t1 = run_experiment(samples, toy_config(), quick_train(),
                                   [&](int, const EpochMetrics&) { ++calls; });
  EXPECT_EQ(calls, 12);
  ASSERT_EQ(t1.splits.size(), 4u);
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(t1.splits[k].test_experiment, k + 1);
    ASSERT_EQ(t1.splits[k].epochs.size(), 3u);
    EXPECT_EQ(t1.splits[k].epochs[0].epoch, 1);
    EXPECT_GE(t1.splits[k].epochs.back().test_accuracy, 0.0);
  }
  TrainConfig threaded = quick_train();
  threaded.threads = 4;
  ResultsTable t2 = run_experiment(samples, toy_config(), threaded);
  for (auto* t : {&t1, &t2}) {
    for (auto& s : t->splits) {
      for (auto& m : s.epochs) m.seconds = 0.0;
    }
  }
  EXPECT_EQ(results_to_csv(t1), results_to_csv(t2));
}

TEST(Results, CsvAndJsonRoundTrip) {
  ResultsTable t;
  for (int k = 1; k <= 4; ++k) {
    SplitResult s;
    s.test_experiment = k;
    for (int e = 1; e <= 10; ++e) {
      s.epochs.push_back({e, 0.1 / (e + k), 0.5 + e / 30.0, 0.4 + e / 31.0, 1.0 / 3.0});
    }
    t.splits.push_back(s);
  }
  const std::string csv = results_to_csv(t);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 41);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kResultsHeader);
  EXPECT_EQ(results_from_csv(csv), t);
  EXPECT_EQ(results_from_json(results_to_json(t)), t);
  EXPECT_EQ(t.rows(), 40u);

  t.splits[0].epochs[0].test_accuracy = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(results_from_json(results_to_json(t)), t);

  const auto dir = std::filesystem::path(::testing::TempDir());
  export_results(t, dir / "r.csv");
  export_results(t, dir / "r.json", ResultsFormat::json);
  EXPECT_EQ(read_results(dir / "r.csv"), t);
  EXPECT_EQ(read_results(dir / "r.json"), t);
  EXPECT_THROW(results_from_csv("not,a,results,file\n"), std::runtime_error);
}

TEST(Results, MeansAndCurves) {
  ResultsTable t;
  for (int k = 1; k <= 2; ++k) {
    SplitResult s;
    s.test_experiment = k;
    s.epochs.push_back({1, 0.3, 0.5, 0.25, 0.0});
    s.epochs.push_back({2, 0.2, 0.5 * k, 0.25 * k, 0.0});
    t.splits.push_back(s);
  }
  EXPECT_DOUBLE_EQ(t.mean_final_train(), 0.75);
  EXPECT_DOUBLE_EQ(t.mean_final_test(), 0.375);
  const std::string curves = curves_csv(t);
  EXPECT_EQ(curves.substr(0, curves.find('\n')), "epoch,split,train_acc,test_acc");
  EXPECT_EQ(std::count(curves.begin(), curves.end(), '\n'), 5);
  EXPECT_NE(curves.find("2,2,1,0.5\n"), std::string::npos);
}

TEST(Cache, HitsReturnTheSameRaster) {
  const auto dir = std::filesystem::path(::testing::TempDir()) / "evflow_cache";
  std::filesystem::remove_all(dir);
  RasterCache cache(dir);
  const EventSample s = generate_sample(Label::B, GenConfig{}, 3);
  const PreprocessOptions opts;
  const SpikeRaster first = cache.get_or_compute(s, opts);
  const SpikeRaster second = cache.get_or_compute(s, opts);
  EXPECT_EQ(cache.misses(), 1u);
  EXPECT_EQ(cache.hits(), 1u);
  EXPECT_EQ(first, second);
  EXPECT_EQ(first, preprocess_sample(s, opts.dt_us, opts.lif));

  PreprocessOptions other = opts;
  other.lif.refractory = 3;
  EXPECT_NE(cache.path_for(s, opts), cache.path_for(s, other));
}

TEST(Prepare, DirectoryMatchesInMemory) {
  const Dataset d = generate_dataset(GenConfig{}, 3, 8);
  const auto dir = std::filesystem::path(::testing::TempDir()) / "evflow_prepare";
  std::filesystem::remove_all(dir);
  write_dataset(d, dir);
  const auto from_dir = prepare_directory(dir, PreprocessOptions{});
  const auto in_memory = prepare_samples(d.samples, PreprocessOptions{});
  ASSERT_EQ(from_dir.size(), in_memory.size());
  for (std::size_t i = 0; i < from_dir.size(); ++i) {
    EXPECT_EQ(from_dir[i].input.raster, in_memory[i].input.raster);
    EXPECT_EQ(from_dir[i].input.label, in_memory[i].input.label);
    EXPECT_EQ(from_dir[i].experiment_id, in_memory[i].experiment_id);
  }
}
