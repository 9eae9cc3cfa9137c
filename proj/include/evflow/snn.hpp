#pragma once

// Feedforward LIF classifier with population-coded output. Dense types are
// templated on the scalar so the same code runs the float/double training
// path and the double-precision gradient checks.

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "evflow/preprocess.hpp"
#include "evflow/rng.hpp"

namespace evflow {

enum class ResetMode { subtract, zero };

/// hard: Heaviside spikes. smooth: sigma_k spikes, fully differentiable; only
/// used to validate backpropagation against finite differences.
enum class SpikeMode { hard, smooth };

struct NetworkConfig {
  std::vector<int> layer_sizes{kInputChannels, 100, 20};
  double beta = 0.9;
  double threshold = 0.5;
  int neurons_per_class = 10;
  ResetMode reset = ResetMode::subtract;
  double surrogate_slope = 75.0;

  int inputs() const { return layer_sizes.front(); }
  int outputs() const { return layer_sizes.back(); }
  int n_classes() const { return outputs() / neurons_per_class; }

  void validate() const {
    if (layer_sizes.size() < 2) throw std::invalid_argument("need at least two layer sizes");
    for (int n : layer_sizes) {
      if (n <= 0) throw std::invalid_argument("layer sizes must be positive");
    }
    if (neurons_per_class <= 0 || outputs() % neurons_per_class != 0 || n_classes() < 2) {
      throw std::invalid_argument("output layer must hold >= 2 populations of neurons_per_class");
    }
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must be in [0, 1]");
    if (!(threshold > 0.0)) throw std::invalid_argument("threshold must be > 0");
    if (!(surrogate_slope > 0.0)) throw std::invalid_argument("surrogate slope must be > 0");
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
/// [steps x units]; row n is contiguous.
template <typename Scalar>
using TimeMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct Layer {
  Matrix<Scalar> weights;  // [out x in]
  Vector<Scalar> bias;     // [out]
};

template <typename Scalar>
struct Network {
  NetworkConfig config;
  std::vector<Layer<Scalar>> layers;

  void validate() const {
    config.validate();
    if (layers.size() + 1 != config.layer_sizes.size()) {
      throw std::invalid_argument("layer count does not match layer_sizes");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      if (layer.weights.rows() != config.layer_sizes[l + 1] ||
          layer.weights.cols() != config.layer_sizes[l] ||
          layer.bias.size() != config.layer_sizes[l + 1]) {
        throw std::invalid_argument("layer " + std::to_string(l) + " shape mismatch");
      }
      if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
        throw std::invalid_argument("non-finite parameter in layer " + std::to_string(l));
      }
    }
  }
};

/// Binary input raster in compressed-row form: the active channels of every
/// step, ascending.
struct SparseRaster {
  int channels = 0;
  std::vector<std::uint32_t> offsets{0};
  std::vector<std::uint16_t> active;

  Eigen::Index steps() const { return static_cast<Eigen::Index>(offsets.size()) - 1; }
  std::span<const std::uint16_t> row(Eigen::Index n) const {
    return std::span<const std::uint16_t>(active).subspan(offsets[n],
                                                          offsets[n + 1] - offsets[n]);
  }
  std::size_t nonzeros() const { return active.size(); }

  static SparseRaster from_dense(const BitMatrix& bits) {
    SparseRaster r;
    r.channels = static_cast<int>(bits.cols());
    r.offsets.reserve(bits.rows() + 1);
    for (Eigen::Index n = 0; n < bits.rows(); ++n) {
      for (Eigen::Index i = 0; i < bits.cols(); ++i) {
        if (bits(n, i)) r.active.push_back(static_cast<std::uint16_t>(i));
      }
      r.offsets.push_back(static_cast<std::uint32_t>(r.active.size()));
    }
    return r;
  }
  static SparseRaster from(const SpikeRaster& raster) { return from_dense(raster.bits); }

  SpikeRaster to_dense() const {
    SpikeRaster out{BitMatrix::Zero(steps(), channels)};
    for (Eigen::Index n = 0; n < steps(); ++n) {
      for (std::uint16_t c : row(n)) out.bits(n, c) = 1;
    }
    return out;
  }

  friend bool operator==(const SparseRaster&, const SparseRaster&) = default;
};

template <typename Scalar>
struct LayerTrace {
  TimeMatrix<Scalar> current;
  TimeMatrix<Scalar> membrane;  // pre-reset
  TimeMatrix<Scalar> spikes;
};

template <typename Scalar>
struct ForwardTrace {
  SpikeMode mode = SpikeMode::hard;
  SparseRaster input;
  std::vector<LayerTrace<Scalar>> layers;

  Eigen::Index steps() const { return input.steps(); }
  const LayerTrace<Scalar>& output() const { return layers.back(); }
};

/// Differentiable spike stand-in 0.5 * (1 + v / (1 + k|v|)), within 0.5 +- 1 / (2k).
template <typename Scalar>
Scalar smooth_spike(Scalar v, Scalar k) {
  return Scalar(0.5) * (Scalar(1) + v / (Scalar(1) + k * std::abs(v)));
}

template <typename Scalar>
Network<Scalar> init_network(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Network<Scalar> net;
  net.config = config;
  for (std::size_t l = 0; l + 1 < config.layer_sizes.size(); ++l) {
    const int in = config.layer_sizes[l];
    const int out = config.layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Layer<Scalar> layer{Matrix<Scalar>(out, in), Vector<Scalar>::Zero(out)};
    for (int i = 0; i < out; ++i) {
      for (int j = 0; j < in; ++j) layer.weights(i, j) = static_cast<Scalar>(rng.uniform(-bound, bound));
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

template <typename Scalar>
struct LifStep {
  Vector<Scalar> pre_reset;
  Vector<Scalar> membrane;  // stored state after reset
  Vector<Scalar> spikes;
};

/// One LIF update: m' = beta * m + current, spike on m' >= threshold (hard)
/// or sigma_k(m' - threshold) (smooth), then reset by subtraction or to zero.
template <typename Scalar>
LifStep<Scalar> lif_layer_step(const Vector<Scalar>& membrane, const Vector<Scalar>& current,
                               Scalar beta, Scalar threshold, ResetMode reset,
                               SpikeMode mode = SpikeMode::hard, Scalar slope = Scalar(75)) {
  if (membrane.size() != current.size()) {
    throw std::invalid_argument("membrane/current size mismatch");
  }
  LifStep<Scalar> step;
  step.pre_reset = beta * membrane + current;
  if (mode == SpikeMode::hard) {
    step.spikes = (step.pre_reset.array() >= threshold).template cast<Scalar>().matrix();
  } else {
    step.spikes = step.pre_reset.unaryExpr(
        [&](Scalar m) { return smooth_spike<Scalar>(m - threshold, slope); });
  }
  if (reset == ResetMode::subtract) {
    step.membrane = step.pre_reset - threshold * step.spikes;
  } else {
    step.membrane = step.pre_reset.cwiseProduct((Scalar(1) - step.spikes.array()).matrix());
  }
  return step;
}

template <typename Scalar>
ForwardTrace<Scalar> forward(const Network<Scalar>& net, const SparseRaster& input,
                             SpikeMode mode = SpikeMode::hard) {
  if (input.channels != net.config.inputs()) {
    throw std::invalid_argument("raster has " + std::to_string(input.channels) +
                                " channels, network expects " +
                                std::to_string(net.config.inputs()));
  }
  const Eigen::Index steps = input.steps();
  const auto beta = static_cast<Scalar>(net.config.beta);
  const auto threshold = static_cast<Scalar>(net.config.threshold);
  const auto slope = static_cast<Scalar>(net.config.surrogate_slope);

  ForwardTrace<Scalar> trace;
  trace.mode = mode;
  trace.input = input;
  std::vector<Vector<Scalar>> state;
  for (const auto& layer : net.layers) {
    const Eigen::Index units = layer.bias.size();
    trace.layers.push_back({TimeMatrix<Scalar>(steps, units), TimeMatrix<Scalar>(steps, units),
                            TimeMatrix<Scalar>(steps, units)});
    state.push_back(Vector<Scalar>::Zero(units));
  }

  Vector<Scalar> current;
  for (Eigen::Index n = 0; n < steps; ++n) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      const auto& layer = net.layers[l];
      if (l == 0) {
        current = layer.bias;
        for (std::uint16_t c : input.row(n)) current += layer.weights.col(c);
      } else {
        current.noalias() = layer.weights * trace.layers[l - 1].spikes.row(n).transpose();
        current += layer.bias;
      }
      LifStep<Scalar> s =
          lif_layer_step<Scalar>(state[l], current, beta, threshold, net.config.reset, mode, slope);
      auto& tl = trace.layers[l];
      tl.current.row(n) = current.transpose();
      tl.membrane.row(n) = s.pre_reset.transpose();
      tl.spikes.row(n) = s.spikes.transpose();
      state[l] = std::move(s.membrane);
    }
  }
  return trace;
}

template <typename Scalar>
ForwardTrace<Scalar> forward(const Network<Scalar>& net, const SpikeRaster& raster,
                             SpikeMode mode = SpikeMode::hard) {
  return forward(net, SparseRaster::from(raster), mode);
}

/// Total output spikes of each population; population c owns output neurons
/// [c * neurons_per_class, (c + 1) * neurons_per_class).
template <typename Scalar>
Vector<Scalar> population_counts(const ForwardTrace<Scalar>& trace, int neurons_per_class) {
  const auto& spikes = trace.output().spikes;
  if (neurons_per_class <= 0 || spikes.cols() % neurons_per_class != 0) {
    throw std::invalid_argument("output size is not a multiple of neurons_per_class");
  }
  const Eigen::Index classes = spikes.cols() / neurons_per_class;
  Vector<Scalar> counts(classes);
  for (Eigen::Index c = 0; c < classes; ++c) {
    counts[c] = spikes.middleCols(c * neurons_per_class, neurons_per_class).sum();
  }
  return counts;
}

/// Argmax; ties go to the lowest class index.
template <typename Scalar>
int predict_from_counts(const Vector<Scalar>& counts) {
  int best = 0;
  for (Eigen::Index c = 1; c < counts.size(); ++c) {
    if (counts[c] > counts[best]) best = static_cast<int>(c);
  }
  return best;
}

template <typename Scalar>
int predict(const ForwardTrace<Scalar>& trace, int neurons_per_class) {
  return predict_from_counts<Scalar>(population_counts(trace, neurons_per_class));
}

// Checkpoints: JSON with the config and every parameter as a row-major
// decimal array printed with round-trip precision.
template <typename Scalar>
void save_checkpoint(const Network<Scalar>& net, const std::filesystem::path& path);
template <typename Scalar>
Network<Scalar> load_checkpoint(const std::filesystem::path& path);
template <typename Scalar>
std::string checkpoint_to_string(const Network<Scalar>& net);
template <typename Scalar>
Network<Scalar> checkpoint_from_string(const std::string& text);

}  // namespace evflow
