#include "evflow/preprocess.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <stdexcept>
#include <string>

namespace evflow {

void LifFilterParams::validate() const {
  if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("LIF beta must be in [0, 1)");
  if (!std::isfinite(weight)) throw std::invalid_argument("LIF weight must be finite");
  if (!(threshold > 0.0) || !std::isfinite(threshold)) {
    throw std::invalid_argument("LIF threshold must be > 0");
  }
  if (refractory < 0) throw std::invalid_argument("refractory period must be >= 0");
}

int channel_index(int x, int y, int polarity) {
  if (x < 0 || x >= kSensorWidth || y < 0 || y >= kSensorHeight || polarity < 0 ||
      polarity > 1) {
    throw std::out_of_range("pixel (" + std::to_string(x) + ", " + std::to_string(y) +
                            ", " + std::to_string(polarity) + ") outside sensor");
  }
  return polarity * kChannelsPerPolarity + (y / kPatchSize) * kGridWidth + x / kPatchSize;
}

BinaryInputRaster bin_events(const EventSample& sample, std::uint64_t dt_us) {
  if (dt_us == 0) throw std::invalid_argument("bin width must be > 0");
  const auto steps = static_cast<Eigen::Index>((sample.duration + dt_us - 1) / dt_us);
  BinaryInputRaster raster{BitMatrix::Zero(steps, kInputChannels)};
  for (const Event& e : sample.events) {
    const auto n = static_cast<Eigen::Index>(e.t / dt_us);
    if (n >= steps) throw std::out_of_range("event past sample duration");
    raster.bits(n, channel_index(e.x, e.y, e.polarity)) = 1;
  }
  return raster;
}

SpikeRaster lif_filter(const BinaryInputRaster& input, const LifFilterParams& params) {
  params.validate();
  const Eigen::Index steps = input.steps();
  const Eigen::Index channels = input.channels();
  SpikeRaster out{BitMatrix::Zero(steps, channels)};

  Eigen::ArrayXd membrane = Eigen::ArrayXd::Zero(channels);
  Eigen::ArrayXd candidate(channels);
  // Steps elapsed since the most recent output spike; the membrane is held at
  // zero while this is <= refractory.
  Eigen::ArrayXi since = Eigen::ArrayXi::Constant(channels, std::numeric_limits<int>::max() / 2);

  for (Eigen::Index n = 0; n < steps; ++n) {
    candidate = params.beta * membrane +
                params.weight * input.bits.row(n).transpose().cast<double>().array();
    for (Eigen::Index i = 0; i < channels; ++i) {
      const bool spike = candidate[i] >= params.threshold;
      out.bits(n, i) = spike ? 1 : 0;
      since[i] = spike ? 0 : since[i] + 1;
      membrane[i] = since[i] <= params.refractory ? 0.0 : candidate[i];
    }
  }
  return out;
}

SpikeRaster preprocess_sample(const EventSample& sample, std::uint64_t dt_us,
                              const LifFilterParams& params) {
  return lif_filter(bin_events(sample, dt_us), params);
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_raster(const SpikeRaster& raster) {
  const auto steps = static_cast<std::uint32_t>(raster.steps());
  const auto channels = static_cast<std::uint32_t>(raster.channels());
  const std::size_t row_bytes = (channels + 7) / 8;
  std::vector<std::uint8_t> out{'S', 'P', 'K', 'R'};
  put_u32(out, steps);
  put_u32(out, channels);
  const std::size_t header = out.size();
  out.resize(header + row_bytes * steps, 0);
  for (std::uint32_t n = 0; n < steps; ++n) {
    std::uint8_t* row = out.data() + header + n * row_bytes;
    for (std::uint32_t i = 0; i < channels; ++i) {
      if (raster.bits(n, i)) row[i / 8] |= static_cast<std::uint8_t>(1U << (i % 8));
    }
  }
  return out;
}

SpikeRaster decode_raster(std::span<const std::uint8_t> bytes) {
  using K = FormatError::Kind;
  if (bytes.size() < 4 || bytes[0] != 'S' || bytes[1] != 'P' || bytes[2] != 'K' ||
      bytes[3] != 'R') {
    throw FormatError(K::bad_magic, "bad magic: not an SPKR raster");
  }
  if (bytes.size() < 12) throw FormatError(K::truncated, "truncated raster header");
  const std::uint32_t steps = get_u32(bytes, 4);
  const std::uint32_t channels = get_u32(bytes, 8);
  const std::size_t row_bytes = (static_cast<std::size_t>(channels) + 7) / 8;
  const std::size_t expected = 12 + row_bytes * steps;
  if (bytes.size() < expected) throw FormatError(K::truncated, "truncated raster payload");
  if (bytes.size() > expected) throw FormatError(K::trailing_data, "trailing raster bytes");
  SpikeRaster raster{BitMatrix::Zero(steps, channels)};
  for (std::uint32_t n = 0; n < steps; ++n) {
    const std::uint8_t* row = bytes.data() + 12 + n * row_bytes;
    for (std::uint32_t i = 0; i < channels; ++i) {
      raster.bits(n, i) = (row[i / 8] >> (i % 8)) & 1U;
    }
    if (channels % 8 != 0 && (row[row_bytes - 1] >> (channels % 8)) != 0) {
      throw FormatError(K::trailing_data, "nonzero row padding bits");
    }
  }
  return raster;
}

void write_raster(const SpikeRaster& raster, const std::filesystem::path& path) {
  const auto bytes = encode_raster(raster);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::io, "write failed: " + path.string());
}

SpikeRaster read_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_raster(bytes);
}

}  // namespace evflow
