#pragma once

// Surrogate-gradient BPTT for the LIF classifier: rate-target MSE loss,
// reverse-time accumulation with a fast-sigmoid derivative, Adam updates and
// a seeded mini-batch epoch loop.

#include <Eigen/Core>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "evflow/rng.hpp"
#include "evflow/snn.hpp"

namespace evflow {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double rate_correct = 0.8;
  double rate_incorrect = 0.2;
  std::uint64_t seed = 0;
  int threads = 1;  // never changes results

  void validate() const {
    if (epochs <= 0 || batch_size <= 0) throw std::invalid_argument("epochs and batch_size must be > 0");
    if (!(rate_correct >= 0.0 && rate_correct <= 1.0 && rate_incorrect >= 0.0 &&
          rate_incorrect <= 1.0)) {
      throw std::invalid_argument("target rates must be in [0, 1]");
    }
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (threads <= 0) throw std::invalid_argument("threads must be > 0");
  }
};

template <typename Scalar>
struct Gradients {
  std::vector<Matrix<Scalar>> weights;
  std::vector<Vector<Scalar>> bias;

  static Gradients zeros_like(const Network<Scalar>& net) {
    Gradients g;
    for (const auto& layer : net.layers) {
      g.weights.push_back(Matrix<Scalar>::Zero(layer.weights.rows(), layer.weights.cols()));
      g.bias.push_back(Vector<Scalar>::Zero(layer.bias.size()));
    }
    return g;
  }

  void set_zero() {
    for (auto& w : weights) w.setZero();
    for (auto& b : bias) b.setZero();
  }

  bool all_finite() const {
    for (const auto& w : weights) if (!w.allFinite()) return false;
    for (const auto& b : bias) if (!b.allFinite()) return false;
    return true;
  }

  Gradients& operator*=(Scalar s) {
    for (auto& w : weights) w *= s;
    for (auto& b : bias) b *= s;
    return *this;
  }
};

template <typename Scalar>
struct AdamState {
  std::vector<Matrix<Scalar>> m_weights, v_weights;
  std::vector<Vector<Scalar>> m_bias, v_bias;
  std::int64_t step = 0;

  static AdamState for_network(const Network<Scalar>& net) {
    AdamState s;
    const auto zeros = Gradients<Scalar>::zeros_like(net);
    s.m_weights = s.v_weights = zeros.weights;
    s.m_bias = s.v_bias = zeros.bias;
    return s;
  }
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
};

/// A preprocessed, labelled network input.
struct TrainingSample {
  SparseRaster raster;
  int label = 0;
};

/// Derivative of the fast sigmoid v / (1 + k|v|): 1 / (1 + k|v|)^2.
inline double surrogate_grad(double v, double k) {
  const double d = 1.0 + k * std::abs(v);
  return 1.0 / (d * d);
}

template <typename Scalar>
Vector<Scalar> rate_targets(int label, int outputs, int neurons_per_class,
                            const TrainConfig& config) {
  Vector<Scalar> t = Vector<Scalar>::Constant(outputs, static_cast<Scalar>(config.rate_incorrect));
  t.segment(label * neurons_per_class, neurons_per_class)
      .setConstant(static_cast<Scalar>(config.rate_correct));
  return t;
}

template <typename Scalar>
Vector<Scalar> output_rates(const ForwardTrace<Scalar>& trace) {
  const auto& spikes = trace.output().spikes;
  return spikes.colwise().sum().transpose() / static_cast<Scalar>(spikes.rows());
}

/// Mean over output neurons of (rate_j - target_j)^2.
template <typename Scalar>
Scalar rate_mse_loss(const ForwardTrace<Scalar>& trace, int label, const TrainConfig& config,
                     int neurons_per_class) {
  if (trace.steps() < 1) throw std::invalid_argument("trace has no steps");
  const Vector<Scalar> rates = output_rates(trace);
  const Vector<Scalar> diff =
      rates - rate_targets<Scalar>(label, static_cast<int>(rates.size()), neurons_per_class, config);
  return diff.squaredNorm() / static_cast<Scalar>(rates.size());
}

/// dLoss/d(pre-reset membrane) of every layer and step, [steps x units].
///
/// Runs the recurrence backwards in time. In hard mode the spike derivative
/// is surrogate_grad(m' - threshold) and the reset term is detached; in
/// smooth mode the exact derivative of sigma_k is used and the reset path is
/// differentiated too, so the result is the true gradient of the smooth model.
template <typename Scalar>
std::vector<TimeMatrix<Scalar>> membrane_deltas(const Network<Scalar>& net,
                                                const ForwardTrace<Scalar>& trace, int label,
                                                const TrainConfig& config) {
  const NetworkConfig& nc = net.config;
  const Eigen::Index steps = trace.steps();
  const auto n_layers = net.layers.size();
  if (trace.layers.size() != n_layers) throw std::invalid_argument("trace does not match network");
  for (std::size_t l = 0; l < n_layers; ++l) {
    if (trace.layers[l].membrane.rows() != steps || trace.layers[l].spikes.rows() != steps) {
      throw std::invalid_argument("trace is missing intermediates");
    }
  }
  const auto beta = static_cast<Scalar>(nc.beta);
  const auto threshold = static_cast<Scalar>(nc.threshold);
  const auto slope = static_cast<Scalar>(nc.surrogate_slope);
  const bool smooth = trace.mode == SpikeMode::smooth;
  const Scalar spike_scale = smooth ? Scalar(0.5) : Scalar(1);

  const Vector<Scalar> rates = output_rates(trace);
  const Vector<Scalar> targets =
      rate_targets<Scalar>(label, nc.outputs(), nc.neurons_per_class, config);
  const Vector<Scalar> out_grad =
      (rates - targets) * (Scalar(2) / (static_cast<Scalar>(nc.outputs()) * static_cast<Scalar>(steps)));

  std::vector<TimeMatrix<Scalar>> deltas;
  std::vector<Vector<Scalar>> carry;  // dLoss / d(stored membrane) from step n + 1
  for (const auto& layer : net.layers) {
    deltas.emplace_back(steps, layer.bias.size());
    carry.push_back(Vector<Scalar>::Zero(layer.bias.size()));
  }

  Vector<Scalar> spike_grad, delta;
  for (Eigen::Index n = steps - 1; n >= 0; --n) {
    spike_grad = out_grad;
    for (std::size_t l = n_layers; l-- > 0;) {
      const auto m = trace.layers[l].membrane.row(n).transpose();
      const auto s = trace.layers[l].spikes.row(n).transpose();
      if (smooth) {
        if (nc.reset == ResetMode::subtract) {
          spike_grad -= threshold * carry[l];
        } else {
          spike_grad -= carry[l].cwiseProduct(m);
        }
      }
      const Vector<Scalar> sg = m.unaryExpr([&](Scalar v) {
        return spike_scale * static_cast<Scalar>(surrogate_grad(static_cast<double>(v - threshold),
                                                                static_cast<double>(slope)));
      });
      if (nc.reset == ResetMode::subtract) {
        delta = carry[l];
      } else {
        delta = carry[l].cwiseProduct((Scalar(1) - s.array()).matrix());
      }
      delta += spike_grad.cwiseProduct(sg);
      deltas[l].row(n) = delta.transpose();
      carry[l] = beta * delta;
      if (l > 0) spike_grad.noalias() = net.layers[l].weights.transpose() * delta;
    }
  }
  return deltas;
}

/// grads += dLoss/dparams given the deltas of one sample.
template <typename Scalar>
void accumulate_gradients(const ForwardTrace<Scalar>& trace,
                          const std::vector<TimeMatrix<Scalar>>& deltas, Gradients<Scalar>& grads) {
  const Eigen::Index steps = trace.steps();
  for (std::size_t l = 0; l < deltas.size(); ++l) {
    grads.bias[l] += deltas[l].colwise().sum().transpose();
    if (l == 0) {
      for (Eigen::Index n = 0; n < steps; ++n) {
        for (std::uint16_t c : trace.input.row(n)) {
          grads.weights[0].col(c) += deltas[0].row(n).transpose();
        }
      }
    } else {
      grads.weights[l].noalias() += deltas[l].transpose() * trace.layers[l - 1].spikes;
    }
  }
}

template <typename Scalar>
Gradients<Scalar> backward(const Network<Scalar>& net, const ForwardTrace<Scalar>& trace,
                           int label, const TrainConfig& config) {
  Gradients<Scalar> grads = Gradients<Scalar>::zeros_like(net);
  accumulate_gradients(trace, membrane_deltas(net, trace, label, config), grads);
  return grads;
}

/// Bias-corrected Adam update, in place. Throws std::domain_error on
/// non-finite gradients.
template <typename Scalar>
void adam_step(Network<Scalar>& net, const Gradients<Scalar>& grads, AdamState<Scalar>& state,
               const TrainConfig& config) {
  if (grads.weights.size() != net.layers.size() || state.m_weights.size() != net.layers.size()) {
    throw std::invalid_argument("gradient/state shape mismatch");
  }
  if (!grads.all_finite()) throw std::domain_error("non-finite gradient");
  state.step += 1;
  const auto b1 = static_cast<Scalar>(config.adam_beta1);
  const auto b2 = static_cast<Scalar>(config.adam_beta2);
  const auto eps = static_cast<Scalar>(config.adam_epsilon);
  const auto lr = static_cast<Scalar>(config.learning_rate);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(config.adam_beta1, static_cast<double>(state.step)));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(config.adam_beta2, static_cast<double>(state.step)));

  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    if (param.rows() != g.rows() || param.cols() != g.cols()) {
      throw std::invalid_argument("gradient shape mismatch");
    }
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    update(net.layers[l].weights, grads.weights[l], state.m_weights[l], state.v_weights[l]);
    update(net.layers[l].bias, grads.bias[l], state.m_bias[l], state.v_bias[l]);
  }
}

namespace detail {

// Runs fn(i) for i in [0, n) on up to `threads` workers. fn must only write
// to per-index storage.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
}

}  // namespace detail

/// One pass over `train` in a seeded random order (seed mixed with the epoch
/// index), one Adam step per mini-batch. Per-sample work may run on several
/// threads; gradients are reduced in batch order, so results do not depend on
/// the thread count. test_accuracy is left NaN.
template <typename Scalar>
EpochMetrics train_epoch(Network<Scalar>& net, std::span<const TrainingSample> train,
                         const TrainConfig& config, AdamState<Scalar>& state, int epoch) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("empty training set");
  const auto start = std::chrono::steady_clock::now();
  const int npc = net.config.neurons_per_class;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(config.seed, {static_cast<std::uint64_t>(epoch)}));
  shuffle(std::span<std::size_t>(order), rng);

  Gradients<Scalar> grads = Gradients<Scalar>::zeros_like(net);
  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::vector<ForwardTrace<Scalar>> traces(batch);
  std::vector<std::vector<TimeMatrix<Scalar>>> deltas(batch);
  std::vector<Scalar> losses(batch);
  std::vector<int> correct(batch);

  double loss_sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += batch) {
    const std::size_t size = std::min(batch, order.size() - begin);
    detail::parallel_for(size, config.threads, [&](std::size_t i) {
      const TrainingSample& sample = train[order[begin + i]];
      traces[i] = forward(net, sample.raster, SpikeMode::hard);
      losses[i] = rate_mse_loss(traces[i], sample.label, config, npc);
      correct[i] = predict(traces[i], npc) == sample.label;
      deltas[i] = membrane_deltas(net, traces[i], sample.label, config);
    });
    grads.set_zero();
    for (std::size_t i = 0; i < size; ++i) {
      accumulate_gradients(traces[i], deltas[i], grads);
      loss_sum += static_cast<double>(losses[i]);
      hits += static_cast<std::size_t>(correct[i]);
    }
    grads *= Scalar(1) / static_cast<Scalar>(size);
    adam_step(net, grads, state, config);
  }

  EpochMetrics metrics;
  metrics.epoch = epoch;
  metrics.loss = loss_sum / static_cast<double>(train.size());
  metrics.train_accuracy = static_cast<double>(hits) / static_cast<double>(train.size());
  metrics.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return metrics;
}

/// Fraction of samples classified correctly by the hard-mode network.
template <typename Scalar>
double evaluate(const Network<Scalar>& net, std::span<const TrainingSample> samples,
                int threads = 1) {
  if (samples.empty()) throw std::invalid_argument("cannot evaluate on an empty set");
  std::vector<int> correct(samples.size());
  detail::parallel_for(samples.size(), threads, [&](std::size_t i) {
    const auto trace = forward(net, samples[i].raster, SpikeMode::hard);
    correct[i] = predict(trace, net.config.neurons_per_class) == samples[i].label;
  });
  return static_cast<double>(std::accumulate(correct.begin(), correct.end(), std::size_t{0})) /
         static_cast<double>(samples.size());
}

}  // namespace evflow
