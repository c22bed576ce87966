#pragma once

#include <cstdint>
#include <vector>

namespace grala {

/// Row-major H x W x C image of doubles.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  double& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int x, int y, int c = 0) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Binary H x W image with values {0, 1}.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int w, int h, std::uint8_t fill = 0) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : data) n += v;
    return n;
  }

  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Square-neighbourhood (Chebyshev) dilation by `radius` pixels.
Mask dilate(const Mask& m, int radius);

}  // namespace grala
