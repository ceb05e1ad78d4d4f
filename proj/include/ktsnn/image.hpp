#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ktsnn {

// Planar [C, H, W] image with values in [0, 1]; C is 1 (gray) or 3 (RGB).
struct Image {
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w) : channels(c), height(h), width(w), values(c * h * w, 0.0) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }
};

// Binary PPM (P6, maxval 255) for RGB and PGM (P5) for gray images.
std::vector<std::uint8_t> encode_pnm(const Image& image);
// Throws Error(DecodeError) on malformed input; `name` is used in messages.
Image decode_pnm(std::span<const std::uint8_t> bytes, const std::string& name = "<memory>");

}  // namespace ktsnn
