#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "evflow/preprocess.hpp"
#include "oracle.hpp"

using namespace evflow;

namespace {

BinaryInputRaster random_input(std::mt19937_64& gen, int steps, int channels, double density) {
  std::bernoulli_distribution on(density);
  BinaryInputRaster in{BitMatrix::Zero(steps, channels)};
  for (int n = 0; n < steps; ++n) {
    for (int c = 0; c < channels; ++c) in.bits(n, c) = on(gen) ? 1 : 0;
  }
  return in;
}

BinaryInputRaster single_channel(const std::vector<int>& bits) {
  BinaryInputRaster in{BitMatrix::Zero(static_cast<Eigen::Index>(bits.size()), 1)};
  for (std::size_t n = 0; n < bits.size(); ++n) in.bits(static_cast<Eigen::Index>(n), 0) = bits[n];
  return in;
}

std::vector<int> spike_rows(const SpikeRaster& r, int channel) {
  std::vector<int> rows;
  for (Eigen::Index n = 0; n < r.steps(); ++n) {
    if (r.bits(n, channel)) rows.push_back(static_cast<int>(n));
  }
  return rows;
}

}  // namespace

TEST(ChannelIndex, Layout) {
  EXPECT_EQ(channel_index(0, 0, 0), 0);
  EXPECT_EQ(channel_index(639, 479, 1), 1535);
  EXPECT_EQ(channel_index(25, 45, 0), 65);  // patch (1, 2)
  EXPECT_EQ(channel_index(19, 19, 1), 768);
  EXPECT_THROW(channel_index(640, 0, 0), std::out_of_range);
  EXPECT_THROW(channel_index(0, 480, 0), std::out_of_range);
  EXPECT_THROW(channel_index(0, 0, 2), std::out_of_range);
}

TEST(BinEvents, ShapeAndOrSemantics) {
  EventSample s;
  s.duration = 10000;
  EXPECT_EQ(bin_events(s, 100).bits.rows(), 100);
  EXPECT_EQ(bin_events(s, 100).bits.cols(), kInputChannels);
  EXPECT_EQ(bin_events(s, 100).bits.count(), 0);

  s.events = {{0, 0, 0, 0}};
  BinaryInputRaster r = bin_events(s, 100);
  EXPECT_EQ(r.bits.count(), 1);
  EXPECT_EQ(r.bits(0, 0), 1);

  s.events = {{210, 3, 4, 1}, {230, 19, 0, 1}, {299, 10, 19, 1}, {300, 10, 19, 1}};
  r = bin_events(s, 100);
  EXPECT_EQ(r.bits(2, 768), 1);
  EXPECT_EQ(r.bits(3, 768), 1);
  EXPECT_EQ(r.bits.count(), 2);

  s.duration = 10050;
  EXPECT_EQ(bin_events(s, 100).steps(), 101);
}

TEST(LifFilter, CanonicalAllOnes) {
  const SpikeRaster out = lif_filter(single_channel(std::vector<int>(20, 1)), LifFilterParams{});
  // steps 4, 10, 16 are rows 3, 9, 15
  EXPECT_EQ(spike_rows(out, 0), (std::vector<int>{3, 9, 15}));
}

TEST(LifFilter, SilentAndSubThreshold) {
  LifFilterParams p;
  EXPECT_EQ(lif_filter(single_channel(std::vector<int>(50, 0)), p).bits.count(), 0);
  std::vector<int> isolated(50, 0);
  isolated[7] = 1;
  EXPECT_EQ(lif_filter(single_channel(isolated), p).bits.count(), 0);
}

TEST(LifFilter, ThresholdTieSpikes) {
  LifFilterParams p;
  p.beta = 0.5;
  p.weight = 1.0;
  p.threshold = 1.0;
  p.refractory = 0;
  EXPECT_EQ(spike_rows(lif_filter(single_channel({1, 0, 0}), p), 0), std::vector<int>{0});
}

TEST(LifFilter, SpikingIsNotGatedDuringRefractory) {
  LifFilterParams p;
  p.beta = 0.0;
  p.weight = 5.0;
  p.threshold = 3.0;
  p.refractory = 4;
  EXPECT_EQ(spike_rows(lif_filter(single_channel({1, 1, 1}), p), 0), (std::vector<int>{0, 1, 2}));
}

TEST(LifFilter, MatchesReferenceSimulation) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> beta(0.0, 0.999), w(0.1, 3.0), thr(0.2, 6.0);
  std::uniform_int_distribution<int> rf(0, 6), steps(1, 120);
  std::uniform_real_distribution<double> density(0.05, 0.95);
  for (int trial = 0; trial < 300; ++trial) {
    LifFilterParams p{beta(gen), w(gen), thr(gen), rf(gen)};
    const BinaryInputRaster in = random_input(gen, steps(gen), 5, density(gen));
    const SpikeRaster out = lif_filter(in, p);
    for (int c = 0; c < 5; ++c) {
      std::vector<int> s_in(in.steps());
      for (Eigen::Index n = 0; n < in.steps(); ++n) s_in[n] = in.bits(n, c);
      const auto expected = oracle::lif_channel(s_in, p.beta, p.weight, p.threshold, p.refractory);
      for (Eigen::Index n = 0; n < in.steps(); ++n) ASSERT_EQ(out.bits(n, c), expected[n]);
    }
  }
}

TEST(LifFilter, ChannelPermutationCommutes) {
  std::mt19937_64 gen(12);
  const BinaryInputRaster in = random_input(gen, 80, 16, 0.6);
  std::vector<int> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), gen);
  BinaryInputRaster permuted{BitMatrix(80, 16)};
  for (int c = 0; c < 16; ++c) permuted.bits.col(c) = in.bits.col(perm[c]);

  const LifFilterParams p;
  const SpikeRaster out = lif_filter(in, p);
  const SpikeRaster out_perm = lif_filter(permuted, p);
  for (int c = 0; c < 16; ++c) EXPECT_EQ(out_perm.bits.col(c), out.bits.col(perm[c]));
}

TEST(LifFilter, RejectsInvalidParams) {
  const BinaryInputRaster in{BitMatrix::Zero(3, 1)};
  EXPECT_THROW(lif_filter(in, LifFilterParams{1.0, 1.0, 3.0, 2}), std::invalid_argument);
  EXPECT_THROW(lif_filter(in, LifFilterParams{0.9, 1.0, 0.0, 2}), std::invalid_argument);
  EXPECT_THROW(lif_filter(in, LifFilterParams{0.9, 1.0, 3.0, -1}), std::invalid_argument);
}

TEST(Spkr, RoundTripAndPacking) {
  std::mt19937_64 gen(13);
  for (int cols : {1, 7, 8, 9, 1536}) {
    const BinaryInputRaster in = random_input(gen, 37, cols, 0.3);
    const SpikeRaster r{in.bits};
    const auto bytes = encode_raster(r);
    EXPECT_EQ(bytes.size(), 12u + 37u * static_cast<std::size_t>((cols + 7) / 8));
    EXPECT_EQ(decode_raster(bytes), r);
  }

  SpikeRaster one{BitMatrix::Zero(1, 10)};
  one.bits(0, 0) = 1;
  one.bits(0, 9) = 1;
  const auto bytes = encode_raster(one);
  EXPECT_EQ(bytes[12], 0x01);
  EXPECT_EQ(bytes[13], 0x02);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_raster(bad), std::runtime_error);
  EXPECT_THROW(decode_raster(std::span(bytes).first(bytes.size() - 1)), std::runtime_error);
}

TEST(Preprocess, ComposesBinningAndFilter) {
  EventSample s;
  for (std::uint64_t t = 0; t < 2000; t += 100) s.events.push_back({t + 10, 100, 100, 1});
  const SpikeRaster r = preprocess_sample(s, 100, LifFilterParams{});
  const int c = channel_index(100, 100, 1);
  EXPECT_EQ(spike_rows(r, c), (std::vector<int>{3, 9, 15}));
  EXPECT_EQ(r.bits.count(), 3);
}
