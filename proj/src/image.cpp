#include "ktsnn/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "ktsnn/error.hpp"

namespace ktsnn {

std::vector<std::uint8_t> encode_pnm(const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw Error(Errc::InvalidConfig, "PNM needs 1 or 3 channels");
  const std::string header = std::string(image.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(image.width) +
                             " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.values.size());
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
      }
    }
  }
  return out;
}

Image decode_pnm(std::span<const std::uint8_t> bytes, const std::string& name) {
  std::size_t at = 0;
  auto fail = [&](const std::string& why) -> Error { return Error(Errc::DecodeError, name + ": " + why); };
  auto skip_space = [&] {
    while (at < bytes.size()) {
      if (bytes[at] == '#') {
        while (at < bytes.size() && bytes[at] != '\n') ++at;
      } else if (std::isspace(bytes[at])) {
        ++at;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> std::size_t {
    skip_space();
    if (at >= bytes.size() || !std::isdigit(bytes[at])) throw fail("malformed header");
    std::size_t v = 0;
    while (at < bytes.size() && std::isdigit(bytes[at])) {
      v = v * 10 + (bytes[at++] - '0');
      if (v > 1'000'000) throw fail("header value too large");
    }
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) throw fail("not a P5/P6 file");
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  at = 2;
  const std::size_t width = number();
  const std::size_t height = number();
  const std::size_t maxval = number();
  if (width == 0 || height == 0 || maxval == 0 || maxval > 255) throw fail("unsupported geometry or maxval");
  if (at >= bytes.size() || !std::isspace(bytes[at])) throw fail("malformed header");
  ++at;
  if (bytes.size() - at != channels * width * height) throw fail("pixel data size mismatch");

  Image img(channels, height, width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < channels; ++c) img.at(c, y, x) = bytes[at++] / static_cast<double>(maxval);
    }
  }
  return img;
}

}  // namespace ktsnn
