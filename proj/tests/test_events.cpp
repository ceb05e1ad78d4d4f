#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ktsnn/events.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ktsnn;
using namespace ktsnn::events;

namespace {

std::vector<std::uint8_t> header(std::uint16_t w, std::uint16_t h, std::uint32_t n) {
  std::vector<std::uint8_t> b{'E', 'V', 'T', '1'};
  b.push_back(w & 0xff);
  b.push_back(w >> 8);
  b.push_back(h & 0xff);
  b.push_back(h >> 8);
  for (int i = 0; i < 4; ++i) b.push_back((n >> (8 * i)) & 0xff);
  return b;
}

void push_record(std::vector<std::uint8_t>& b, std::uint32_t t, std::uint16_t x, std::uint16_t y, std::uint8_t p) {
  for (int i = 0; i < 4; ++i) b.push_back((t >> (8 * i)) & 0xff);
  b.push_back(x & 0xff);
  b.push_back(x >> 8);
  b.push_back(y & 0xff);
  b.push_back(y >> 8);
  b.push_back(p);
}

LuminanceFrame flat(std::uint32_t t, std::size_t h, std::size_t w, double v) {
  return {t, h, w, std::vector<double>(h * w, v)};
}

}  // namespace

TEST(EventCodec, EmptyHeaderDecodesToNoEvents) {
  const EventStream s = decode_event_file(header(4, 4, 0));
  EXPECT_EQ(s.width, 4);
  EXPECT_EQ(s.height, 4);
  EXPECT_TRUE(s.events.empty());
}

TEST(EventCodec, SingleRecordMatchesHandBytes) {
  auto bytes = header(4, 4, 1);
  push_record(bytes, 10, 1, 2, 1);
  const EventStream s = decode_event_file(bytes);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.events[0], (Event{10, 1, 2, 1}));
  EXPECT_EQ(encode_event_file(s), bytes);
}

TEST(EventCodec, EncodedLengthIsHeaderPlusRecords) {
  EXPECT_EQ(encode_event_file({4, 4, {}}).size(), 12u);
  EXPECT_EQ(encode_event_file({4, 4, {{0, 0, 0, 0}, {5, 3, 3, 1}}}).size(), 12u + 2 * 9u);
}

TEST(EventCodec, CoordinateOutOfRangeReportsOffset) {
  auto bytes = header(4, 4, 1);
  push_record(bytes, 0, 7, 0, 1);
  try {
    decode_event_file(bytes);
    FAIL();
  } catch (const DecodeFailure& e) {
    EXPECT_EQ(e.code(), Errc::CoordinateOutOfRange);
    EXPECT_EQ(e.offset(), 12u + 4u);
  }
}

TEST(EventCodec, MalformedInputs) {
  auto bad_magic = header(4, 4, 0);
  bad_magic[0] = 'X';
  EXPECT_ERRC(decode_event_file(bad_magic), Errc::BadMagic);

  auto truncated = header(4, 4, 2);
  push_record(truncated, 0, 0, 0, 0);
  truncated.push_back(1);
  EXPECT_ERRC(decode_event_file(truncated), Errc::TruncatedRecord);

  auto backwards = header(4, 4, 2);
  push_record(backwards, 9, 0, 0, 0);
  push_record(backwards, 3, 0, 0, 0);
  EXPECT_ERRC(decode_event_file(backwards), Errc::NonMonotonicTimestamp);

  auto polarity = header(4, 4, 1);
  push_record(polarity, 0, 0, 0, 2);
  EXPECT_ERRC(decode_event_file(polarity), Errc::DecodeError);

  auto trailing = header(4, 4, 0);
  trailing.push_back(0);
  EXPECT_ERRC(decode_event_file(trailing), Errc::DecodeError);
}

TEST(EventCodec, RandomRoundTripIsIdentity) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const EventStream s = oracle::random_stream(rng, 1000, 64, 48);
    const auto bytes = encode_event_file(s);
    EXPECT_EQ(decode_event_file(bytes), s);
    EXPECT_EQ(encode_event_file(decode_event_file(bytes)), bytes);
  }
}

TEST(IntegrateFrames, EmptyStreamGivesZeros) {
  const Frames f = integrate_frames({4, 3, {}}, 5);
  EXPECT_EQ(f.steps, 5u);
  EXPECT_EQ(f.height, 3u);
  EXPECT_EQ(f.width, 4u);
  EXPECT_EQ(f.total(), 0.0);
}

TEST(IntegrateFrames, TenEventsFiveSlices) {
  std::mt19937_64 rng(1);
  const EventStream s = oracle::random_stream(rng, 10, 4, 4);
  const Frames f = integrate_frames(s, 5);
  for (std::size_t t = 0; t < 5; ++t) {
    double slice = 0.0;
    for (std::size_t i = 0; i < f.step_size(); ++i) slice += f.values[t * f.step_size() + i];
    EXPECT_EQ(slice, 2.0);
  }
  EXPECT_EQ(f, oracle::integrate(s, 5));
}

TEST(IntegrateFrames, RemainderIsDropped) {
  std::mt19937_64 rng(2);
  const EventStream s = oracle::random_stream(rng, 11, 4, 4);
  EXPECT_EQ(integrate_frames(s, 5).total(), 10.0);
}

TEST(IntegrateFrames, FewerEventsThanSlices) {
  std::mt19937_64 rng(3);
  EXPECT_EQ(integrate_frames(oracle::random_stream(rng, 3, 4, 4), 5).total(), 0.0);
}

TEST(IntegrateFrames, MatchesPerEventOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = rng() % 1001;
    const std::size_t slices = 1 + rng() % 10;
    const EventStream s = oracle::random_stream(rng, n, 1 + rng() % 9, 1 + rng() % 9);
    const Frames f = integrate_frames(s, slices);
    EXPECT_EQ(f, oracle::integrate(s, slices));
    EXPECT_EQ(f.total(), static_cast<double>((n / slices) * slices));
  }
}

TEST(IntegrateFrames, ZeroSlicesRejected) { EXPECT_ERRC(integrate_frames({2, 2, {}}, 0), Errc::ZeroSlices); }

TEST(SimulateDvs, ConstantSequenceIsSilent) {
  std::vector<LuminanceFrame> frames{flat(0, 3, 3, 0.4), flat(10, 3, 3, 0.4), flat(20, 3, 3, 0.4)};
  EXPECT_TRUE(simulate_dvs(frames, 0.2).events.empty());
}

TEST(SimulateDvs, TwoAndAHalfThresholdsGiveTwoEvents) {
  const double c = 0.2;
  std::vector<LuminanceFrame> frames{flat(0, 1, 1, 0.5), flat(10, 1, 1, 0.5 * std::exp(2.5 * c))};
  const EventStream s = simulate_dvs(frames, c);
  ASSERT_EQ(s.size(), 2u);
  for (const Event& e : s.events) {
    EXPECT_EQ(e.p, 1);
    EXPECT_EQ(e.t, 10u);
  }
  frames[1] = flat(10, 1, 1, 0.5 * std::exp(-2.5 * c));
  const EventStream off = simulate_dvs(frames, c);
  ASSERT_EQ(off.size(), 2u);
  EXPECT_EQ(off.events[0].p, 0);
}

TEST(SimulateDvs, MonotonePixelsKeepOnePolarity) {
  std::vector<LuminanceFrame> frames;
  for (std::uint32_t k = 0; k < 10; ++k) {
    LuminanceFrame f{k * 100, 1, 2, {0.05 * std::pow(1.3, k), 0.9 * std::pow(0.8, k)}};
    frames.push_back(f);
  }
  const EventStream s = simulate_dvs(frames, 0.1);
  ASSERT_FALSE(s.events.empty());
  for (const Event& e : s.events) EXPECT_EQ(e.p, e.x == 0 ? 1 : 0);
}

TEST(SimulateDvs, ZeroLuminanceIsFloored) {
  std::vector<LuminanceFrame> frames{flat(0, 1, 1, 0.0), flat(1, 1, 1, kLogFloor)};
  EXPECT_TRUE(simulate_dvs(frames, 0.01).events.empty());
}

TEST(SimulateDvs, MovingSquareEventsHugEdges) {
  const std::size_t n = 16;
  std::vector<std::vector<bool>> masks;
  std::vector<LuminanceFrame> frames;
  for (std::uint32_t k = 0; k < 8; ++k) {
    std::vector<bool> mask(n * n, false);
    LuminanceFrame f = flat(k * 1000, n, n, 0.05);
    for (std::size_t y = 6; y < 9; ++y)
      for (std::size_t x = 2 + k; x < 5 + k; ++x) {
        mask[y * n + x] = true;
        f.intensity[y * n + x] = 0.9;
      }
    masks.push_back(mask);
    frames.push_back(f);
  }
  const EventStream s = simulate_dvs(frames, 0.15);
  ASSERT_FALSE(s.events.empty());
  std::size_t near = 0;
  for (const Event& e : s.events) {
    const std::size_t k = e.t / 1000;
    bool hit = false;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int y = e.y + dy, x = e.x + dx;
        if (y < 0 || x < 0 || y >= int(n) || x >= int(n)) continue;
        const std::size_t i = y * n + x;
        hit |= masks[k][i] != masks[k - 1][i];
      }
    near += hit;
    // Leading edge brightens, trailing edge darkens.
    EXPECT_EQ(e.p, masks[k][e.y * n + e.x] ? 1 : 0);
  }
  EXPECT_GE(static_cast<double>(near) / s.size(), 0.95);
}

TEST(SimulateDvs, Deterministic) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<LuminanceFrame> frames;
  for (std::uint32_t k = 0; k < 5; ++k) {
    LuminanceFrame f = flat(k, 6, 5, 0.0);
    for (double& v : f.intensity) v = u(rng);
    frames.push_back(f);
  }
  EXPECT_EQ(simulate_dvs(frames, 0.1), simulate_dvs(frames, 0.1));
  validate(simulate_dvs(frames, 0.1));
}

TEST(SimulateDvs, Errors) {
  std::vector<LuminanceFrame> two{flat(0, 2, 2, 0.5), flat(1, 2, 2, 0.5)};
  EXPECT_ERRC(simulate_dvs(two, 0.0), Errc::NonPositiveThreshold);
  EXPECT_ERRC(simulate_dvs(std::span(two).first(1), 0.1), Errc::EmptySequence);
  auto mismatch = two;
  mismatch[1] = flat(1, 3, 2, 0.5);
  EXPECT_ERRC(simulate_dvs(mismatch, 0.1), Errc::ShapeMismatch);
  auto backwards = two;
  backwards[0].t = 5;
  EXPECT_ERRC(simulate_dvs(backwards, 0.1), Errc::NonMonotonicTimestamp);
}

TEST(Summary, CountsPolarities) {
  const StreamSummary s = summarize({8, 6, {{100, 0, 0, 1}, {150, 1, 1, 0}, {400, 2, 2, 1}}});
  EXPECT_EQ(s.count, 3u);
  EXPECT_EQ(s.width, 8);
  EXPECT_EQ(s.height, 6);
  EXPECT_EQ(s.duration_us, 300u);
  EXPECT_EQ(s.on_events, 2u);
  EXPECT_EQ(s.off_events, 1u);
}
