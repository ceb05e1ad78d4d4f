#pragma once

#include <cstddef>
#include <vector>

namespace ktsnn {

// Dense [T, 2, H, W] block of reals, row-major. Used both for integrated
// event frames and for encoded static images, so the network sees one input
// type regardless of domain.
struct Frames {
  std::size_t steps = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  static constexpr std::size_t kChannels = 2;

  Frames() = default;
  Frames(std::size_t t, std::size_t h, std::size_t w)
      : steps(t), height(h), width(w), values(t * kChannels * h * w, 0.0) {}

  std::size_t index(std::size_t t, std::size_t c, std::size_t y, std::size_t x) const {
    return ((t * kChannels + c) * height + y) * width + x;
  }
  double& at(std::size_t t, std::size_t c, std::size_t y, std::size_t x) {
    return values[index(t, c, y, x)];
  }
  double at(std::size_t t, std::size_t c, std::size_t y, std::size_t x) const {
    return values[index(t, c, y, x)];
  }
  std::size_t step_size() const { return kChannels * height * width; }

  double total() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }

  friend bool operator==(const Frames&, const Frames&) = default;
};

// Integrated event frames: non-negative integral counts.
using FrameTensor = Frames;
// Network input, from either domain.
using EncodedInput = Frames;

}  // namespace ktsnn
