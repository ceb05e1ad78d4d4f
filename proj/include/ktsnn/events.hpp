#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ktsnn/frames.hpp"

namespace ktsnn::events {

// One DVS event. p = 1 is an ON (brightening) event, p = 0 an OFF event.
struct Event {
  std::uint32_t t = 0;  // microseconds
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint8_t p = 0;

  friend bool operator==(const Event&, const Event&) = default;
};

struct EventStream {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<Event> events;

  std::size_t size() const { return events.size(); }
  friend bool operator==(const EventStream&, const EventStream&) = default;
};

// Throws Error(CoordinateOutOfRange / NonMonotonicTimestamp / DecodeError)
// when the stream breaks an invariant.
void validate(const EventStream& stream);

// .evt layout, all little-endian:
//   "EVT1" | width u16 | height u16 | count u32 | count x record
//   record = t u32 | x u16 | y u16 | p u8
inline constexpr std::size_t kHeaderBytes = 12;
inline constexpr std::size_t kRecordBytes = 9;

std::vector<std::uint8_t> encode_event_file(const EventStream& stream);

// Throws DecodeFailure naming the first offending byte offset.
EventStream decode_event_file(std::span<const std::uint8_t> bytes);

// Index-based slicing: slice j takes events [floor(N/T)*j, floor(N/T)*(j+1)).
// Events past floor(N/T)*T are dropped. Channel index is the polarity.
FrameTensor integrate_frames(const EventStream& stream, std::size_t slices);

struct LuminanceFrame {
  std::uint32_t t = 0;  // microseconds
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> intensity;  // row-major, >= 0
};

// Floor applied before taking the log of a luminance value.
inline constexpr double kLogFloor = 1e-3;

// Contrast-threshold event generation. Each pixel keeps a reference log
// level; while the current log level differs from it by at least C an event
// is emitted and the reference moves C toward the current level. Output is
// ordered by (t, y, x, p).
EventStream simulate_dvs(std::span<const LuminanceFrame> frames, double threshold);

struct StreamSummary {
  std::size_t count = 0;
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::uint32_t duration_us = 0;
  std::size_t on_events = 0;
  std::size_t off_events = 0;
};

StreamSummary summarize(const EventStream& stream);

}  // namespace ktsnn::events
