#include "ktsnn/events.hpp"

#include <cmath>
#include <string>

#include "ktsnn/error.hpp"

namespace ktsnn::events {
namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

}  // namespace

void validate(const EventStream& stream) {
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    const Event& e = stream.events[i];
    if (e.x >= stream.width || e.y >= stream.height) {
      throw Error(Errc::CoordinateOutOfRange, "event " + std::to_string(i) + " at (" + std::to_string(e.x) +
                                                  ", " + std::to_string(e.y) + ") outside " +
                                                  std::to_string(stream.width) + "x" + std::to_string(stream.height));
    }
    if (e.p > 1) throw Error(Errc::DecodeError, "event " + std::to_string(i) + " has polarity " + std::to_string(e.p));
    if (i > 0 && e.t < stream.events[i - 1].t) {
      throw Error(Errc::NonMonotonicTimestamp, "event " + std::to_string(i) + " goes back in time");
    }
  }
}

std::vector<std::uint8_t> encode_event_file(const EventStream& stream) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + kRecordBytes * stream.events.size());
  out.insert(out.end(), {'E', 'V', 'T', '1'});
  put_u16(out, stream.width);
  put_u16(out, stream.height);
  put_u32(out, static_cast<std::uint32_t>(stream.events.size()));
  for (const Event& e : stream.events) {
    put_u32(out, e.t);
    put_u16(out, e.x);
    put_u16(out, e.y);
    out.push_back(e.p);
  }
  return out;
}

EventStream decode_event_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || bytes[0] != 'E' || bytes[1] != 'V' || bytes[2] != 'T' || bytes[3] != '1') {
    throw DecodeFailure(Errc::BadMagic, 0, "missing EVT1 magic");
  }
  if (bytes.size() < kHeaderBytes) throw DecodeFailure(Errc::TruncatedRecord, bytes.size(), "header cut short");

  EventStream stream;
  stream.width = get_u16(bytes, 4);
  stream.height = get_u16(bytes, 6);
  const std::uint32_t count = get_u32(bytes, 8);
  stream.events.reserve(std::min<std::size_t>(count, (bytes.size() - kHeaderBytes) / kRecordBytes));

  std::size_t at = kHeaderBytes;
  for (std::uint32_t i = 0; i < count; ++i, at += kRecordBytes) {
    if (at + kRecordBytes > bytes.size()) {
      throw DecodeFailure(Errc::TruncatedRecord, at, "record " + std::to_string(i) + " of " + std::to_string(count));
    }
    Event e{get_u32(bytes, at), get_u16(bytes, at + 4), get_u16(bytes, at + 6), bytes[at + 8]};
    if (e.x >= stream.width) throw DecodeFailure(Errc::CoordinateOutOfRange, at + 4, "x = " + std::to_string(e.x));
    if (e.y >= stream.height) throw DecodeFailure(Errc::CoordinateOutOfRange, at + 6, "y = " + std::to_string(e.y));
    if (e.p > 1) throw DecodeFailure(Errc::DecodeError, at + 8, "polarity " + std::to_string(e.p));
    if (!stream.events.empty() && e.t < stream.events.back().t) {
      throw DecodeFailure(Errc::NonMonotonicTimestamp, at, "t = " + std::to_string(e.t));
    }
    stream.events.push_back(e);
  }
  if (at != bytes.size()) throw DecodeFailure(Errc::DecodeError, at, "trailing bytes after last record");
  return stream;
}

FrameTensor integrate_frames(const EventStream& stream, std::size_t slices) {
  if (slices < 1) throw Error(Errc::ZeroSlices, "need at least one slice");
  FrameTensor frames(slices, stream.height, stream.width);
  const std::size_t per_slice = stream.events.size() / slices;
  for (std::size_t j = 0; j < slices; ++j) {
    for (std::size_t i = per_slice * j; i < per_slice * (j + 1); ++i) {
      const Event& e = stream.events[i];
      frames.at(j, e.p, e.y, e.x) += 1.0;
    }
  }
  return frames;
}

EventStream simulate_dvs(std::span<const LuminanceFrame> frames, double threshold) {
  if (!(threshold > 0.0)) throw Error(Errc::NonPositiveThreshold, "contrast threshold must be > 0");
  if (frames.size() < 2) throw Error(Errc::EmptySequence, "need at least two frames");

  const std::size_t h = frames[0].height;
  const std::size_t w = frames[0].width;
  for (const LuminanceFrame& f : frames) {
    if (f.height != h || f.width != w || f.intensity.size() != h * w) {
      throw Error(Errc::ShapeMismatch, "all frames must share one geometry");
    }
    for (double v : f.intensity) {
      if (!(v >= 0.0)) throw Error(Errc::OutOfRangePixel, "luminance must be non-negative");
    }
  }

  auto log_level = [](double v) { return std::log(std::max(v, kLogFloor)); };

  std::vector<double> reference(h * w);
  for (std::size_t i = 0; i < h * w; ++i) reference[i] = log_level(frames[0].intensity[i]);

  // Accept crossings within a hair of C so that exact multiples computed
  // through log() are not lost to rounding.
  const double trigger = threshold * (1.0 - 1e-9);

  EventStream out;
  out.width = static_cast<std::uint16_t>(w);
  out.height = static_cast<std::uint16_t>(h);
  for (std::size_t k = 1; k < frames.size(); ++k) {
    const LuminanceFrame& f = frames[k];
    if (f.t < frames[k - 1].t) throw Error(Errc::NonMonotonicTimestamp, "frame " + std::to_string(k));
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        const double level = log_level(f.intensity[i]);
        double& ref = reference[i];
        const Event proto{f.t, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), 0};
        while (level - ref >= trigger) {
          ref += threshold;
          Event e = proto;
          e.p = 1;
          out.events.push_back(e);
        }
        while (ref - level >= trigger) {
          ref -= threshold;
          out.events.push_back(proto);
        }
      }
    }
  }
  return out;
}

StreamSummary summarize(const EventStream& stream) {
  StreamSummary s;
  s.count = stream.events.size();
  s.width = stream.width;
  s.height = stream.height;
  if (!stream.events.empty()) s.duration_us = stream.events.back().t - stream.events.front().t;
  for (const Event& e : stream.events) (e.p ? s.on_events : s.off_events)++;
  return s;
}

}  // namespace ktsnn::events
