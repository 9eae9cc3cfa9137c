#include <gtest/gtest.h>

#include <random>

#include "evflow/snn.hpp"

using namespace evflow;

namespace {

NetworkConfig tiny_config() {
  NetworkConfig c;
  c.layer_sizes = {2, 2, 2};
  c.neurons_per_class = 1;
  return c;
}

SparseRaster raster_from(std::initializer_list<std::initializer_list<int>> rows) {
  BitMatrix bits(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index n = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (int v : row) bits(n, c++) = static_cast<std::uint8_t>(v);
    ++n;
  }
  return SparseRaster::from_dense(bits);
}

}  // namespace

TEST(Init, ShapesAndBounds) {
  const NetworkConfig c;
  const auto net = init_network<double>(c, 1);
  ASSERT_EQ(net.layers.size(), 2u);
  EXPECT_EQ(net.layers[0].weights.rows(), 100);
  EXPECT_EQ(net.layers[0].weights.cols(), 1536);
  EXPECT_EQ(net.layers[1].weights.rows(), 20);
  EXPECT_EQ(net.layers[1].weights.cols(), 100);
  EXPECT_LE(net.layers[0].weights.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(1536.0));
  EXPECT_GT(net.layers[0].weights.cwiseAbs().maxCoeff(), 0.025);
  EXPECT_LE(net.layers[1].weights.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_EQ(net.layers[0].bias.squaredNorm(), 0.0);
  EXPECT_NO_THROW(net.validate());
}

TEST(Init, SeedDeterminesWeights) {
  const NetworkConfig c = tiny_config();
  EXPECT_EQ(init_network<double>(c, 3).layers[1].weights, init_network<double>(c, 3).layers[1].weights);
  EXPECT_NE(init_network<double>(c, 3).layers[1].weights, init_network<double>(c, 4).layers[1].weights);
  // float and double draw the same numbers
  EXPECT_EQ(init_network<float>(c, 3).layers[0].weights, init_network<double>(c, 3).layers[0].weights.cast<float>());
}

TEST(Config, Validation) {
  NetworkConfig c;
  c.neurons_per_class = 7;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = NetworkConfig{};
  c.layer_sizes = {4};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = NetworkConfig{};
  c.threshold = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(NetworkConfig{}.n_classes(), 2);
}

TEST(LifLayerStep, HandExamples) {
  using V = Vector<double>;
  auto s = lif_layer_step<double>(V::Zero(2), V{{0.6, 0.4}}, 0.9, 0.5, ResetMode::subtract);
  EXPECT_EQ(s.spikes, (V{{1.0, 0.0}}));
  EXPECT_NEAR(s.membrane[0], 0.1, 1e-15);
  EXPECT_EQ(s.membrane[1], 0.4);

  s = lif_layer_step<double>(V{{0.4, 0.0}}, V{{0.0, 0.5}}, 0.9, 0.5, ResetMode::zero);
  EXPECT_NEAR(s.membrane[0], 0.36, 1e-15);
  EXPECT_EQ(s.spikes[1], 1.0);  // equality spikes
  EXPECT_EQ(s.membrane[1], 0.0);

  EXPECT_THROW(lif_layer_step<double>(V::Zero(2), V::Zero(3), 0.9, 0.5, ResetMode::zero),
               std::invalid_argument);
}

TEST(LifLayerStep, SubtractResetConservation) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    Vector<double> m(6), cur(6);
    for (int j = 0; j < 6; ++j) {
      m[j] = u(gen);
      cur[j] = u(gen);
    }
    const auto s = lif_layer_step<double>(m, cur, 0.9, 0.5, ResetMode::subtract);
    for (int j = 0; j < 6; ++j) {
      EXPECT_EQ(s.membrane[j], s.spikes[j] == 1.0 ? s.pre_reset[j] - 0.5 : s.pre_reset[j]);
    }
  }
}

TEST(SmoothSpike, Range) {
  EXPECT_EQ(smooth_spike(0.0, 75.0), 0.5);
  EXPECT_DOUBLE_EQ(smooth_spike(1.0, 75.0), 0.5 * (1.0 + 1.0 / 76.0));
  EXPECT_DOUBLE_EQ(smooth_spike(-1.0, 75.0), 0.5 * (1.0 - 1.0 / 76.0));
  // bounded by 0.5 +- 1 / (2k)
  EXPECT_LT(smooth_spike(1e9, 75.0), 0.5 + 1.0 / 150.0);
  EXPECT_GT(smooth_spike(-1e9, 75.0), 0.5 - 1.0 / 150.0);
}

TEST(Forward, HandSimulatedNetwork) {
  Network<double> net;
  net.config = tiny_config();
  net.layers.push_back({Matrix<double>{{0.6, 0.0}, {0.25, 0.125}}, Vector<double>{{0.0, 0.125}}});
  net.layers.push_back({Matrix<double>{{1.0, 0.0}, {0.0, 1.0}}, Vector<double>{{0.0, 0.0}}});

  const auto trace = forward(net, raster_from({{1, 1}, {0, 1}}));
  // step 1: layer 1 currents (0.6, 0.5) -> both spike; layer 2 currents (1, 1) -> both spike
  EXPECT_EQ(trace.layers[0].spikes.row(0), (Eigen::RowVector2d{1.0, 1.0}));
  EXPECT_EQ(trace.layers[1].spikes.row(0), (Eigen::RowVector2d{1.0, 1.0}));
  // step 2: layer 1 pre-reset 0.9*0.1 + 0 = 0.09 and 0.9*0 + 0.25 = 0.25 -> silent
  EXPECT_NEAR(trace.layers[0].membrane(1, 0), 0.09, 1e-15);
  EXPECT_EQ(trace.layers[0].membrane(1, 1), 0.25);
  EXPECT_EQ(trace.layers[0].spikes.row(1).sum(), 0.0);
  // layer 2 stored 0.5 after subtract, pre-reset 0.45
  EXPECT_NEAR(trace.layers[1].membrane(1, 0), 0.45, 1e-15);
  EXPECT_EQ(trace.layers[1].spikes.row(1).sum(), 0.0);
  EXPECT_EQ(trace.layers[0].current(0, 1), 0.5);
}

TEST(Forward, SparseAndDenseInputAgree) {
  NetworkConfig c;
  c.layer_sizes = {12, 6, 4};
  c.neurons_per_class = 2;
  const auto net = init_network<double>(c, 9);
  std::mt19937_64 gen(1);
  std::bernoulli_distribution on(0.4);
  SpikeRaster r{BitMatrix(7, 12)};
  for (Eigen::Index n = 0; n < 7; ++n) {
    for (Eigen::Index i = 0; i < 12; ++i) r.bits(n, i) = on(gen);
  }
  const SparseRaster sparse = SparseRaster::from(r);
  EXPECT_EQ(sparse.to_dense(), r);
  const auto a = forward(net, r);
  const auto b = forward(net, sparse);
  EXPECT_EQ(a.output().spikes, b.output().spikes);
  EXPECT_THROW(forward(init_network<double>(tiny_config(), 1), sparse), std::invalid_argument);
}

TEST(Readout, PopulationCountsAndTies) {
  ForwardTrace<double> trace;
  trace.input = SparseRaster::from_dense(BitMatrix::Zero(2, 1));
  LayerTrace<double> out;
  out.spikes = TimeMatrix<double>::Zero(2, 4);
  out.spikes(0, 2) = 1.0;
  out.spikes(1, 3) = 1.0;
  trace.layers.push_back(out);
  EXPECT_EQ(population_counts(trace, 2), (Vector<double>{{0.0, 2.0}}));
  EXPECT_EQ(predict(trace, 2), 1);
  trace.layers[0].spikes(0, 0) = 1.0;
  trace.layers[0].spikes(1, 1) = 1.0;
  EXPECT_EQ(predict(trace, 2), 0);  // tie
  EXPECT_EQ(predict_from_counts<double>(Vector<double>::Zero(2)), 0);
  EXPECT_THROW(population_counts(trace, 3), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsExact) {
  NetworkConfig c = tiny_config();
  c.reset = ResetMode::zero;
  c.layer_sizes = {5, 3, 2};
  auto net = init_network<double>(c, 17);
  net.layers[1].bias[0] = 0.1;
  const auto back = checkpoint_from_string<double>(checkpoint_to_string(net));
  EXPECT_EQ(back.config, net.config);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    EXPECT_EQ(back.layers[l].weights, net.layers[l].weights);
    EXPECT_EQ(back.layers[l].bias, net.layers[l].bias);
  }

  const auto path = std::filesystem::path(::testing::TempDir()) / "net.ckpt.json";
  const auto fnet = init_network<float>(c, 2);
  save_checkpoint(fnet, path);
  EXPECT_EQ(load_checkpoint<float>(path).layers[0].weights, fnet.layers[0].weights);
  EXPECT_THROW(checkpoint_from_string<double>(R"({"format": "other"})"), std::runtime_error);
}
