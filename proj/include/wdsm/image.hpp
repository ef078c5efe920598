#pragma once

#include <cstddef>
#include <vector>

namespace wdsm {

// Row-major grayscale image. Intensities are nominally in [0,1]; binary masks
// use exactly 0 and 1.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), pixels(h * w, fill) {}

  float& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  float at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  std::size_t size() const { return pixels.size(); }

  bool operator==(const Image&) const = default;
};

}  // namespace wdsm
