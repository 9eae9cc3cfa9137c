#include "evflow/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <tuple>

#include "evflow/rng.hpp"

namespace evflow {

namespace {

constexpr std::uint64_t kSliceUs = 100;
constexpr std::uint64_t kVelocityTag = 0x6a;

std::string entry_file(int experiment_id, Label label) {
  return "exp" + std::to_string(experiment_id) + "_" + std::string(to_string(label)) +
         ".evcy";
}

// In every slice, each pixel of row y within `width` px behind a moving edge
// emits Poisson(event_rate) events at uniform times inside the slice. The edge
// sits at x_start + speed * t; sign = +1 puts the band behind (left of) a
// leading edge, -1 ahead of (right of) a trailing edge, i.e. inside the disc.
void sweep_band(std::vector<Event>& out, Rng& rng, double x_start, double speed_px_per_us,
                double width, double sign, std::uint16_t y, std::uint8_t polarity,
                const GenConfig& config) {
  const std::uint64_t bins = (config.duration + kSliceUs - 1) / kSliceUs;
  for (std::uint64_t b = 0; b < bins; ++b) {
    const double tm = (static_cast<double>(b) + 0.5) * kSliceUs;
    const double edge = x_start + speed_px_per_us * tm;
    const double lo = sign > 0 ? edge - width : edge;
    const double hi = sign > 0 ? edge : edge + width;
    const int first = std::max(0, static_cast<int>(std::ceil(lo)));
    const int last = std::min(kSensorWidth - 1, static_cast<int>(std::floor(hi)));
    for (int x = first; x <= last; ++x) {
      const std::uint64_t n = rng.poisson(config.event_rate);
      for (std::uint64_t k = 0; k < n; ++k) {
        const std::uint64_t t = b * kSliceUs + rng.below(kSliceUs);
        if (t < config.duration) out.push_back({t, static_cast<std::uint16_t>(x), y, polarity});
      }
    }
  }
}

}  // namespace

GenConfig GenConfig::from_diameters(double diameter_a_um, double diameter_b_um,
                                    double px_per_um) {
  GenConfig c;
  c.px_per_um = px_per_um;
  c.radius_a = diameter_a_um * px_per_um / 2.0;
  c.radius_b = diameter_b_um * px_per_um / 2.0;
  return c;
}

void GenConfig::validate() const {
  if (!(px_per_um > 0.0)) throw std::invalid_argument("px_per_um must be > 0");
  if (!(radius_a > 0.0 && radius_b > radius_a)) {
    throw std::invalid_argument("radii must satisfy radius_b > radius_a > 0");
  }
  if (!(velocity > 0.0)) throw std::invalid_argument("velocity must be > 0");
  if (!(event_rate >= 0.0) || !(noise_rate >= 0.0)) {
    throw std::invalid_argument("event and noise rates must be >= 0");
  }
  if (duration == 0) throw std::invalid_argument("duration must be > 0");
  if (!(channel_width_um > 0.0)) throw std::invalid_argument("channel width must be > 0");
  if (!(edge_fraction > 0.0 && edge_fraction <= 1.0)) {
    throw std::invalid_argument("edge_fraction must be in (0, 1]");
  }
  if (!(entry_jitter_us >= 0.0)) throw std::invalid_argument("entry_jitter_us must be >= 0");
  if (!(velocity_jitter >= 0.0 && velocity_jitter < 1.0)) {
    throw std::invalid_argument("velocity_jitter must be in [0, 1)");
  }
}

void to_json(nlohmann::json& j, const GenConfig& c) {
  j = nlohmann::json{{"px_per_um", c.px_per_um},
                     {"radius_a", c.radius_a},
                     {"radius_b", c.radius_b},
                     {"velocity", c.velocity},
                     {"event_rate", c.event_rate},
                     {"noise_rate", c.noise_rate},
                     {"duration", c.duration},
                     {"channel_width_um", c.channel_width_um},
                     {"velocity_jitter", c.velocity_jitter},
                     {"edge_fraction", c.edge_fraction},
                     {"entry_jitter_us", c.entry_jitter_us}};
}

void from_json(const nlohmann::json& j, GenConfig& c) {
  GenConfig d;
  // Diameters, when given, set the radii at the configured scale.
  d.px_per_um = j.value("px_per_um", d.px_per_um);
  if (j.contains("diameter_a_um")) d.radius_a = j.at("diameter_a_um").get<double>() * d.px_per_um / 2;
  if (j.contains("diameter_b_um")) d.radius_b = j.at("diameter_b_um").get<double>() * d.px_per_um / 2;
  d.radius_a = j.value("radius_a", d.radius_a);
  d.radius_b = j.value("radius_b", d.radius_b);
  d.velocity = j.value("velocity", d.velocity);
  d.event_rate = j.value("event_rate", d.event_rate);
  d.noise_rate = j.value("noise_rate", d.noise_rate);
  d.duration = j.value("duration", d.duration);
  d.channel_width_um = j.value("channel_width_um", d.channel_width_um);
  d.velocity_jitter = j.value("velocity_jitter", d.velocity_jitter);
  d.edge_fraction = j.value("edge_fraction", d.edge_fraction);
  d.entry_jitter_us = j.value("entry_jitter_us", d.entry_jitter_us);
  d.validate();
  c = d;
}

GenConfig load_gen_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return nlohmann::json::parse(in).get<GenConfig>();
}

EventSample generate_sample(Label label, const GenConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  EventSample sample;
  sample.label = label;
  sample.duration = config.duration;

  const double r = config.radius(label);
  const double speed = config.velocity / 1000.0;  // px per us
  const double center_row = kSensorHeight / 2.0;
  const double half_channel = config.channel_width_px() / 2.0;
  const double y_lo = center_row - half_channel + r;
  const double y_hi = center_row + half_channel - r;
  const double yc = y_lo < y_hi ? rng.uniform(y_lo, y_hi) : center_row;
  const double x0 = -r - speed * rng.uniform(0.0, config.entry_jitter_us);

  std::vector<Event>& events = sample.events;
  const int row_first = std::max(0, static_cast<int>(std::ceil(yc - r)));
  const int row_last = std::min(kSensorHeight - 1, static_cast<int>(std::floor(yc + r)));
  for (int y = row_first; y <= row_last; ++y) {
    const double dy = y - yc;
    const double half_chord = std::sqrt(std::max(0.0, r * r - dy * dy));
    const auto row = static_cast<std::uint16_t>(y);
    const double band = config.edge_fraction * half_chord;
    sweep_band(events, rng, x0 + half_chord, speed, band, +1, row, 1, config);
    sweep_band(events, rng, x0 - half_chord, speed, band, -1, row, 0, config);
  }

  const std::uint64_t bins = (config.duration + kSliceUs - 1) / kSliceUs;
  for (std::uint64_t b = 0; b < bins; ++b) {
    const std::uint64_t n = rng.poisson(config.noise_rate);
    for (std::uint64_t k = 0; k < n; ++k) {
      Event e;
      e.t = b * kSliceUs + rng.below(kSliceUs);
      e.x = static_cast<std::uint16_t>(rng.below(kSensorWidth));
      e.y = static_cast<std::uint16_t>(rng.below(kSensorHeight));
      e.polarity = static_cast<std::uint8_t>(rng.below(2));
      if (e.t < config.duration) events.push_back(e);
    }
  }

  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return std::tie(a.t, a.y, a.x, a.polarity) < std::tie(b.t, b.y, b.x, b.polarity);
  });
  return sample;
}

std::uint64_t sample_seed(std::uint64_t master, int experiment_id, Label label,
                          std::size_t index) {
  return mix_seed(master, {static_cast<std::uint64_t>(experiment_id),
                           static_cast<std::uint64_t>(label_index(label)), index});
}

double experiment_velocity(const GenConfig& config, std::uint64_t master,
                           int experiment_id) {
  Rng rng(mix_seed(master, {static_cast<std::uint64_t>(experiment_id), kVelocityTag}));
  return config.velocity * (1.0 + config.velocity_jitter * (2.0 * rng.uniform() - 1.0));
}

ExperimentData generate_experiment(int experiment_id, std::size_t n_per_class,
                                   const GenConfig& config, std::uint64_t seed) {
  if (n_per_class == 0) throw std::invalid_argument("n_per_class must be > 0");
  if (experiment_id < 1) throw std::invalid_argument("experiment ids start at 1");
  config.validate();
  ExperimentData data;
  data.experiment_id = experiment_id;
  data.seed = seed;
  data.velocity = experiment_velocity(config, seed, experiment_id);
  GenConfig run = config;
  run.velocity = data.velocity;
  data.samples.reserve(2 * n_per_class);
  for (Label label : {Label::A, Label::B}) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const std::uint64_t s = sample_seed(seed, experiment_id, label, i);
      EventSample sample = generate_sample(label, run, s);
      sample.experiment_id = experiment_id;
      data.samples.push_back(std::move(sample));
      data.sample_seeds.push_back(s);
    }
  }
  return data;
}

std::size_t Manifest::count(int experiment_id, Label label) const {
  std::size_t n = 0;
  for (const ManifestEntry& e : entries) {
    if (e.experiment_id == experiment_id && e.label == label) n += e.count;
  }
  return n;
}

void to_json(nlohmann::json& j, const Manifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const ManifestEntry& e : m.entries) {
    entries.push_back({{"experiment", e.experiment_id},
                       {"label", std::string(to_string(e.label))},
                       {"file", e.file},
                       {"count", e.count},
                       {"velocity", e.velocity},
                       {"seeds", e.seeds}});
  }
  j = nlohmann::json{{"format", "evflow-dataset"},
                     {"version", 1},
                     {"master_seed", m.master_seed},
                     {"window_us", m.window_us},
                     {"seed_rule", "mix_seed(master, {experiment, label, index})"},
                     {"generator", m.config},
                     {"entries", entries}};
}

void from_json(const nlohmann::json& j, Manifest& m) {
  if (j.value("format", std::string()) != "evflow-dataset") {
    throw std::runtime_error("not an evflow dataset manifest");
  }
  m.master_seed = j.at("master_seed").get<std::uint64_t>();
  m.window_us = j.at("window_us").get<std::uint64_t>();
  m.config = j.at("generator").get<GenConfig>();
  m.entries.clear();
  for (const auto& e : j.at("entries")) {
    ManifestEntry entry;
    entry.experiment_id = e.at("experiment").get<int>();
    entry.label = parse_label(e.at("label").get<std::string>());
    entry.file = e.at("file").get<std::string>();
    entry.count = e.at("count").get<std::size_t>();
    entry.velocity = e.at("velocity").get<double>();
    entry.seeds = e.at("seeds").get<std::vector<std::uint64_t>>();
    m.entries.push_back(std::move(entry));
  }
}

namespace {

void append_entries(Manifest& manifest, const ExperimentData& exp, std::size_t n_per_class) {
  for (Label label : {Label::A, Label::B}) {
    ManifestEntry entry;
    entry.experiment_id = exp.experiment_id;
    entry.label = label;
    entry.file = entry_file(exp.experiment_id, label);
    entry.count = n_per_class;
    entry.velocity = exp.velocity;
    const std::size_t offset = label_index(label) * n_per_class;
    entry.seeds.assign(exp.sample_seeds.begin() + offset,
                       exp.sample_seeds.begin() + offset + n_per_class);
    manifest.entries.push_back(std::move(entry));
  }
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& dir) {
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << nlohmann::json(manifest).dump(1) << '\n';
}

void write_entry_samples(const std::filesystem::path& dir, const ManifestEntry& entry,
                         std::span<const EventSample> samples, std::uint64_t window) {
  const EventStream stream = join_recording(samples, window);
  write_events(stream, dir / entry.file);
}

}  // namespace

Dataset generate_dataset(const GenConfig& config, std::size_t n_per_class_per_exp,
                         std::uint64_t seed) {
  Dataset dataset;
  dataset.manifest.master_seed = seed;
  dataset.manifest.window_us = config.duration;
  dataset.manifest.config = config;
  for (int id = 1; id <= kNumExperiments; ++id) {
    ExperimentData exp = generate_experiment(id, n_per_class_per_exp, config, seed);
    append_entries(dataset.manifest, exp, n_per_class_per_exp);
    for (EventSample& s : exp.samples) dataset.samples.push_back(std::move(s));
  }
  return dataset;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const ManifestEntry& entry : dataset.manifest.entries) {
    std::vector<EventSample> chunk;
    for (const EventSample& s : dataset.samples) {
      if (s.experiment_id == entry.experiment_id && s.label == entry.label) chunk.push_back(s);
    }
    if (chunk.size() != entry.count) {
      throw std::runtime_error("manifest count disagrees with samples for " + entry.file);
    }
    write_entry_samples(dir, entry, chunk, dataset.manifest.window_us);
  }
  write_manifest(dataset.manifest, dir);
}

Manifest generate_dataset_to(const std::filesystem::path& dir, const GenConfig& config,
                             std::size_t n_per_class_per_exp, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  Manifest manifest;
  manifest.master_seed = seed;
  manifest.window_us = config.duration;
  manifest.config = config;
  for (int id = 1; id <= kNumExperiments; ++id) {
    const ExperimentData exp = generate_experiment(id, n_per_class_per_exp, config, seed);
    append_entries(manifest, exp, n_per_class_per_exp);
    const std::span<const EventSample> all(exp.samples);
    const std::size_t n_entries = manifest.entries.size();
    write_entry_samples(dir, manifest.entries[n_entries - 2], all.first(n_per_class_per_exp),
                        manifest.window_us);
    write_entry_samples(dir, manifest.entries[n_entries - 1], all.last(n_per_class_per_exp),
                        manifest.window_us);
  }
  write_manifest(manifest, dir);
  return manifest;
}

Manifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("no manifest.json in " + dir.string());
  return nlohmann::json::parse(in).get<Manifest>();
}

std::vector<EventSample> load_entry(const std::filesystem::path& dir,
                                    const Manifest& manifest, const ManifestEntry& entry) {
  const EventStream stream = read_events(dir / entry.file);
  return split_recording(stream, manifest.window_us, entry.count, entry.label,
                         entry.experiment_id);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset dataset;
  dataset.manifest = read_manifest(dir);
  for (const ManifestEntry& entry : dataset.manifest.entries) {
    for (EventSample& s : load_entry(dir, dataset.manifest, entry)) {
      dataset.samples.push_back(std::move(s));
    }
  }
  return dataset;
}

}  // namespace evflow
