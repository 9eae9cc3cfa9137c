#pragma once

// Spatial patch pooling (640x480x2 -> 32x24x2) and temporal downsampling of
// every pooled channel through a discretized LIF neuron with refractory clamp.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "evflow/events.hpp"

namespace evflow {

inline constexpr int kPatchSize = 20;
inline constexpr int kGridWidth = kSensorWidth / kPatchSize;    // 32
inline constexpr int kGridHeight = kSensorHeight / kPatchSize;  // 24
inline constexpr int kChannelsPerPolarity = kGridWidth * kGridHeight;
inline constexpr int kInputChannels = 2 * kChannelsPerPolarity;  // 1536
inline constexpr std::uint64_t kDefaultBinUs = 100;

struct LifFilterParams {
  double beta = 0.9;       // membrane decay per step, in [0, 1)
  double weight = 1.0;     // synaptic weight of an input event
  double threshold = 3.0;  // > 0
  int refractory = 2;      // steps, >= 0

  void validate() const;
  friend bool operator==(const LifFilterParams&, const LifFilterParams&) = default;
};

using BitMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row n holds the pooled input bits of step n+1 (steps are 1-based in the
/// neuron recurrences, rows are 0-based).
struct BinaryInputRaster {
  BitMatrix bits;

  Eigen::Index steps() const { return bits.rows(); }
  Eigen::Index channels() const { return bits.cols(); }
};

/// Binary [steps x channels] spike matrix; row n is the output of step n+1.
struct SpikeRaster {
  BitMatrix bits;

  Eigen::Index steps() const { return bits.rows(); }
  Eigen::Index channels() const { return bits.cols(); }
  friend bool operator==(const SpikeRaster& a, const SpikeRaster& b) {
    return a.bits.rows() == b.bits.rows() && a.bits.cols() == b.bits.cols() &&
           a.bits == b.bits;
  }
};

/// polarity * 768 + (y / 20) * 32 + (x / 20). Throws std::out_of_range.
int channel_index(int x, int y, int polarity);

/// ceil(duration / dt) steps; bit (n, i) is set iff some event with
/// t / dt == n maps to channel i.
BinaryInputRaster bin_events(const EventSample& sample, std::uint64_t dt_us);

SpikeRaster lif_filter(const BinaryInputRaster& input, const LifFilterParams& params);

SpikeRaster preprocess_sample(const EventSample& sample, std::uint64_t dt_us,
                              const LifFilterParams& params);

// SPKR dump: "SPKR" | u32 steps | u32 channels | rows bit-packed LSB-first,
// each row padded to a whole byte.
std::vector<std::uint8_t> encode_raster(const SpikeRaster& raster);
SpikeRaster decode_raster(std::span<const std::uint8_t> bytes);
void write_raster(const SpikeRaster& raster, const std::filesystem::path& path);
SpikeRaster read_raster(const std::filesystem::path& path);

}  // namespace evflow
