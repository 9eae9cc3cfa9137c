#include "evflow/events.hpp"

#include <fstream>
#include <iterator>
#include <span>

namespace evflow {

namespace {

constexpr std::uint16_t kEvcyVersion = 1;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(static_cast<T>(bytes[offset + i]) << (8 * i));
  }
  return value;
}

void require_valid(const EventStream& stream) {
  const StreamReport report = validate_stream(stream);
  if (report.ok()) return;
  const Violation& v = report.violations.front();
  switch (v.kind) {
    case Violation::Kind::unsorted:
      throw FormatError(FormatError::Kind::unsorted, v.message);
    case Violation::Kind::out_of_bounds:
      throw FormatError(FormatError::Kind::out_of_bounds, v.message);
    case Violation::Kind::bad_polarity:
      throw FormatError(FormatError::Kind::bad_polarity, v.message);
  }
}

}  // namespace

Label label_from_index(int index) {
  if (index < 0 || index >= kNumLabels) {
    throw std::out_of_range("label index " + std::to_string(index));
  }
  return static_cast<Label>(index);
}

std::string_view to_string(Label l) { return l == Label::A ? "A" : "B"; }

Label parse_label(std::string_view s) {
  if (s == "A") return Label::A;
  if (s == "B") return Label::B;
  throw std::invalid_argument("unknown label '" + std::string(s) + "'");
}

std::vector<std::uint8_t> encode_events(const EventStream& stream) {
  require_valid(stream);
  std::vector<std::uint8_t> out;
  out.reserve(kEvcyHeaderBytes + kEvcyRecordBytes * stream.events.size());
  for (char c : std::string_view("EVCY")) out.push_back(static_cast<std::uint8_t>(c));
  put_le<std::uint16_t>(out, kEvcyVersion);
  put_le<std::uint16_t>(out, stream.width);
  put_le<std::uint16_t>(out, stream.height);
  put_le<std::uint16_t>(out, 0);
  put_le<std::uint64_t>(out, stream.events.size());
  for (const Event& e : stream.events) {
    put_le<std::uint64_t>(out, e.t);
    put_le<std::uint16_t>(out, e.x);
    put_le<std::uint16_t>(out, e.y);
    put_le<std::uint8_t>(out, e.polarity);
  }
  return out;
}

EventStream decode_events(std::span<const std::uint8_t> bytes) {
  using K = FormatError::Kind;
  if (bytes.size() < 4 || bytes[0] != 'E' || bytes[1] != 'V' || bytes[2] != 'C' ||
      bytes[3] != 'Y') {
    throw FormatError(K::bad_magic, "bad magic: not an EVCY file");
  }
  if (bytes.size() < kEvcyHeaderBytes) {
    throw FormatError(K::truncated, "truncated header");
  }
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kEvcyVersion) {
    throw FormatError(K::bad_version,
                      "unsupported EVCY version " + std::to_string(version));
  }
  EventStream stream;
  stream.width = get_le<std::uint16_t>(bytes, 6);
  stream.height = get_le<std::uint16_t>(bytes, 8);
  const auto count = get_le<std::uint64_t>(bytes, 12);
  const std::size_t payload = bytes.size() - kEvcyHeaderBytes;
  if (count > payload / kEvcyRecordBytes) {
    throw FormatError(K::truncated, "truncated: header declares " +
                                        std::to_string(count) + " records, file holds " +
                                        std::to_string(payload / kEvcyRecordBytes));
  }
  if (payload != count * kEvcyRecordBytes) {
    throw FormatError(K::trailing_data, "trailing bytes after last record");
  }
  stream.events.resize(count);
  std::size_t off = kEvcyHeaderBytes;
  for (Event& e : stream.events) {
    e.t = get_le<std::uint64_t>(bytes, off);
    e.x = get_le<std::uint16_t>(bytes, off + 8);
    e.y = get_le<std::uint16_t>(bytes, off + 10);
    e.polarity = bytes[off + 12];
    off += kEvcyRecordBytes;
  }
  require_valid(stream);
  return stream;
}

void write_events(const EventStream& stream, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_events(stream);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::io, "write failed: " + path.string());
}

EventStream read_events(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_events(bytes);
}

StreamReport validate_stream(const EventStream& stream) {
  StreamReport report;
  report.count = stream.events.size();
  if (!stream.events.empty()) {
    report.duration = stream.events.back().t - stream.events.front().t;
    if (stream.events.back().t < stream.events.front().t) report.duration = 0;
  }
  bool seen_unsorted = false, seen_bounds = false, seen_polarity = false;
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    const Event& e = stream.events[i];
    (e.polarity ? report.on_count : report.off_count) += 1;
    if (!seen_unsorted && i > 0 && e.t < stream.events[i - 1].t) {
      seen_unsorted = true;
      report.violations.push_back(
          {Violation::Kind::unsorted, i,
           "unsorted: event " + std::to_string(i) + " has t=" + std::to_string(e.t) +
               " < previous t=" + std::to_string(stream.events[i - 1].t)});
    }
    if (!seen_bounds && (e.x >= stream.width || e.y >= stream.height)) {
      seen_bounds = true;
      report.violations.push_back(
          {Violation::Kind::out_of_bounds, i,
           "out of bounds: event " + std::to_string(i) + " at (" + std::to_string(e.x) +
               ", " + std::to_string(e.y) + ") outside " + std::to_string(stream.width) +
               "x" + std::to_string(stream.height)});
    }
    if (!seen_polarity && e.polarity > 1) {
      seen_polarity = true;
      report.violations.push_back({Violation::Kind::bad_polarity, i,
                                   "bad polarity: event " + std::to_string(i) +
                                       " has polarity " + std::to_string(e.polarity)});
    }
  }
  return report;
}

std::vector<EventSample> split_recording(const EventStream& stream,
                                         std::uint64_t window,
                                         std::size_t n_windows, Label label,
                                         int experiment_id) {
  if (window == 0) throw std::invalid_argument("window must be > 0");
  std::vector<EventSample> samples(n_windows);
  for (EventSample& s : samples) {
    s.duration = window;
    s.label = label;
    s.experiment_id = experiment_id;
  }
  for (const Event& e : stream.events) {
    const std::uint64_t k = e.t / window;
    if (k >= n_windows) {
      throw std::invalid_argument("event at t=" + std::to_string(e.t) +
                                  " beyond last window");
    }
    Event rel = e;
    rel.t -= k * window;
    samples[k].events.push_back(rel);
  }
  return samples;
}

std::vector<EventSample> segment_windows(const EventStream& stream,
                                         std::uint64_t window, Label label,
                                         int experiment_id) {
  if (window == 0) throw std::invalid_argument("window must be > 0");
  if (stream.events.empty()) return {};
  const std::size_t n = stream.events.back().t / window + 1;
  std::vector<EventSample> all = split_recording(stream, window, n, label, experiment_id);
  std::erase_if(all, [](const EventSample& s) { return s.events.empty(); });
  return all;
}

EventStream join_recording(std::span<const EventSample> samples,
                           std::uint64_t window) {
  EventStream stream;
  std::size_t total = 0;
  for (const EventSample& s : samples) total += s.events.size();
  stream.events.reserve(total);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].duration > window) {
      throw std::invalid_argument("sample longer than the recording window");
    }
    for (Event e : samples[i].events) {
      if (e.t >= window) throw std::invalid_argument("event outside its window");
      e.t += i * window;
      stream.events.push_back(e);
    }
  }
  return stream;
}

std::uint64_t sample_hash(const EventSample& sample) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  feed(sample.duration, 8);
  for (const Event& e : sample.events) {
    feed(e.t, 8);
    feed(e.x, 2);
    feed(e.y, 2);
    feed(e.polarity, 1);
  }
  return h;
}

}  // namespace evflow
