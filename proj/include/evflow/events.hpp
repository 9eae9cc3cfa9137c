#pragma once

// Event-camera data model, sample segmentation and the EVCY file format.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace evflow {

inline constexpr std::uint16_t kSensorWidth = 640;
inline constexpr std::uint16_t kSensorHeight = 480;
inline constexpr std::uint64_t kDefaultWindowUs = 10'000;

/// Single address-event. t is in microseconds since recording start.
struct Event {
  std::uint64_t t = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint8_t polarity = 0;  // 0 = OFF, 1 = ON

  friend bool operator==(const Event&, const Event&) = default;
};

struct EventStream {
  std::uint16_t width = kSensorWidth;
  std::uint16_t height = kSensorHeight;
  std::vector<Event> events;

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

enum class Label : std::uint8_t { A = 0, B = 1 };

inline constexpr int kNumLabels = 2;

constexpr int label_index(Label l) { return static_cast<int>(l); }
Label label_from_index(int index);
std::string_view to_string(Label l);
Label parse_label(std::string_view s);

/// One particle window. Event times are relative to the window start.
struct EventSample {
  std::vector<Event> events;
  std::uint64_t duration = kDefaultWindowUs;
  Label label = Label::A;
  int experiment_id = 1;

  friend bool operator==(const EventSample&, const EventSample&) = default;
};

/// Thrown by the EVCY reader/writer; kind() identifies the failure.
class FormatError : public std::runtime_error {
 public:
  enum class Kind {
    io,
    bad_magic,
    bad_version,
    truncated,
    trailing_data,
    unsorted,
    out_of_bounds,
    bad_polarity,
  };

  FormatError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::size_t kEvcyHeaderBytes = 20;
inline constexpr std::size_t kEvcyRecordBytes = 13;

/// Serializes to the little-endian EVCY layout:
///   "EVCY" | u16 version=1 | u16 width | u16 height | u16 reserved=0 |
///   u64 count | count x { u64 t | u16 x | u16 y | u8 polarity }
std::vector<std::uint8_t> encode_events(const EventStream& stream);
EventStream decode_events(std::span<const std::uint8_t> bytes);

void write_events(const EventStream& stream, const std::filesystem::path& path);
EventStream read_events(const std::filesystem::path& path);

struct Violation {
  enum class Kind { unsorted, out_of_bounds, bad_polarity };
  Kind kind;
  std::size_t index;  // first offending event
  std::string message;
};

struct StreamReport {
  std::size_t count = 0;
  std::uint64_t duration = 0;  // last t - first t
  std::size_t on_count = 0;
  std::size_t off_count = 0;
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
};

/// Reports at most one violation per kind, each at its first occurrence.
StreamReport validate_stream(const EventStream& stream);

/// Cuts a recording into consecutive half-open windows [k*w, (k+1)*w) and
/// drops windows without events.
std::vector<EventSample> segment_windows(const EventStream& stream,
                                         std::uint64_t window, Label label,
                                         int experiment_id);

/// Like segment_windows but keeps exactly n_windows windows, empty ones
/// included. Throws std::invalid_argument if an event lies past the last one.
std::vector<EventSample> split_recording(const EventStream& stream,
                                         std::uint64_t window,
                                         std::size_t n_windows, Label label,
                                         int experiment_id);

/// Inverse of split_recording: window i is shifted to start at i * window.
EventStream join_recording(std::span<const EventSample> samples,
                           std::uint64_t window);

/// FNV-1a over the EVCY record bytes plus duration; stable content key.
std::uint64_t sample_hash(const EventSample& sample);

}  // namespace evflow
