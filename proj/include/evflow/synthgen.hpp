#pragma once

// Seeded generator of bead-transit event samples. A disc of class-dependent
// radius moves horizontally through the channel. Covered pixels in a band
// behind its leading edge emit ON events, covered pixels in a band ahead of
// its trailing edge emit OFF events, and uniform background noise is added on
// top. With edge_fraction = 1 the bands are the two half-discs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "evflow/events.hpp"

namespace evflow {

struct GenConfig {
  double px_per_um = 2.0;
  double radius_a = 16.0;  // px; 16 um bead
  double radius_b = 20.0;  // px; 20 um bead
  double velocity = 50.0;  // px per ms
  double event_rate = 0.01;  // events per covered edge-band pixel per 100 us
  double noise_rate = 2.0;   // background events per 100 us over the frame
  std::uint64_t duration = kDefaultWindowUs;
  double channel_width_um = 200.0;
  double velocity_jitter = 0.1;  // per-experiment relative velocity spread
  double edge_fraction = 1.0;      // band thickness / half-chord, in (0, 1]
  double entry_jitter_us = 200.0;  // spread of the time the disc enters the frame

  /// Radii from bead diameters in um at the given scale.
  static GenConfig from_diameters(double diameter_a_um, double diameter_b_um,
                                  double px_per_um = 2.0);

  double radius(Label label) const { return label == Label::A ? radius_a : radius_b; }
  double channel_width_px() const { return channel_width_um * px_per_um; }
  void validate() const;

  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

void to_json(nlohmann::json& j, const GenConfig& c);
void from_json(const nlohmann::json& j, GenConfig& c);

GenConfig load_gen_config(const std::filesystem::path& path);

EventSample generate_sample(Label label, const GenConfig& config, std::uint64_t seed);

struct ExperimentData {
  int experiment_id = 1;
  std::uint64_t seed = 0;
  double velocity = 0.0;  // after jitter
  std::vector<EventSample> samples;  // all A samples, then all B samples
  std::vector<std::uint64_t> sample_seeds;
};

/// Per-sample seed: mix_seed(master, {experiment_id, label, index}).
std::uint64_t sample_seed(std::uint64_t master, int experiment_id, Label label,
                          std::size_t index);

/// Velocity of one experiment: velocity * (1 + jitter * (2u - 1)) with u drawn
/// from mix_seed(master, {experiment_id, 0x6a}).
double experiment_velocity(const GenConfig& config, std::uint64_t master,
                           int experiment_id);

ExperimentData generate_experiment(int experiment_id, std::size_t n_per_class,
                                   const GenConfig& config, std::uint64_t seed);

inline constexpr int kNumExperiments = 4;
inline constexpr std::size_t kDeskScalePerClass = 600;
inline constexpr std::size_t kPaperScalePerClass = 6000;

struct ManifestEntry {
  int experiment_id = 1;
  Label label = Label::A;
  std::string file;  // relative to the dataset directory
  std::size_t count = 0;
  double velocity = 0.0;
  std::vector<std::uint64_t> seeds;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  std::uint64_t master_seed = 0;
  std::uint64_t window_us = kDefaultWindowUs;
  GenConfig config;
  std::vector<ManifestEntry> entries;

  std::size_t count(int experiment_id, Label label) const;
  friend bool operator==(const Manifest&, const Manifest&) = default;
};

void to_json(nlohmann::json& j, const Manifest& m);
void from_json(const nlohmann::json& j, Manifest& m);

struct Dataset {
  std::vector<EventSample> samples;
  Manifest manifest;
};

Dataset generate_dataset(const GenConfig& config, std::size_t n_per_class_per_exp,
                         std::uint64_t seed);

/// Writes one EVCY recording per (experiment, class): sample i occupies
/// [i * window, (i + 1) * window). manifest.json describes the files.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Streams a dataset to disk experiment by experiment without holding it in
/// memory; returns the manifest written.
Manifest generate_dataset_to(const std::filesystem::path& dir, const GenConfig& config,
                             std::size_t n_per_class_per_exp, std::uint64_t seed);

Manifest read_manifest(const std::filesystem::path& dir);

/// Samples of one manifest entry, empty windows included, in seed order.
std::vector<EventSample> load_entry(const std::filesystem::path& dir,
                                    const Manifest& manifest, const ManifestEntry& entry);

Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace evflow
