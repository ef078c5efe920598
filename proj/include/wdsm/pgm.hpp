#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "wdsm/image.hpp"

namespace wdsm::pgm {

// Binary (P5) PGM. Values are scaled to [0,1] by maxval on read and quantized
// by floor(clamp(x,0,1) * maxval + 0.5) on write. Samples wider than 8 bits
// are big-endian.
Image decode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode(const Image& image, std::uint32_t maxval = 255);

Image read(const std::filesystem::path& path);
void write(const Image& image, const std::filesystem::path& path, std::uint32_t maxval = 255);

// Observes every path passed to read() while alive. Instrumentation for
// proving which files a code path touches; not thread-safe, one at a time.
class ScopedReadObserver {
 public:
  using Callback = std::function<void(const std::filesystem::path&)>;
  explicit ScopedReadObserver(Callback callback);
  ~ScopedReadObserver();
  ScopedReadObserver(const ScopedReadObserver&) = delete;
  ScopedReadObserver& operator=(const ScopedReadObserver&) = delete;

 private:
  Callback previous_;
};

}  // namespace wdsm::pgm
