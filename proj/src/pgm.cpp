#include "wdsm/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "wdsm/errors.hpp"

namespace wdsm::pgm {
namespace {

ScopedReadObserver::Callback& observer() {
  static ScopedReadObserver::Callback cb;
  return cb;
}

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  // Skips whitespace and '#' comments, then reads a decimal field.
  std::uint64_t field(const char* name) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::uint64_t v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 0xFFFFFFFFULL) throw ParseError(std::string("PGM ") + name + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("PGM header: expected ") + name, pos_);
    return v;
  }

  // Exactly one whitespace byte separates the header from the raster.
  void single_space() {
    if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) {
      throw ParseError("PGM header: expected whitespace before raster", pos_);
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw ParseError("not a binary PGM: missing P5 magic", 0);
  }
  HeaderReader r(bytes);
  r.advance(2);
  const auto width = r.field("width");
  const auto height = r.field("height");
  const std::size_t maxval_at = r.pos();
  const auto maxval = r.field("maxval");
  if (width == 0 || height == 0) throw ParseError("PGM dimensions must be positive", maxval_at);
  if (maxval == 0 || maxval > 65535) throw ParseError("PGM maxval must be in 1..65535", maxval_at);
  r.single_space();

  const std::size_t bytes_per_sample = maxval < 256 ? 1 : 2;
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  const std::size_t need = n * bytes_per_sample;
  if (bytes.size() - r.pos() < need) {
    throw ParseError("PGM raster truncated: need " + std::to_string(need) + " bytes, have " +
                         std::to_string(bytes.size() - r.pos()),
                     bytes.size());
  }
  Image img(height, width);
  const auto* p = bytes.data() + r.pos();
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t v = bytes_per_sample == 1 ? p[i] : (std::uint32_t{p[2 * i]} << 8) | p[2 * i + 1];
    if (v > maxval) {
      throw ParseError("PGM sample exceeds maxval", r.pos() + i * bytes_per_sample);
    }
    img.pixels[i] = static_cast<float>(v * scale);
  }
  return img;
}

std::vector<std::uint8_t> encode(const Image& image, std::uint32_t maxval) {
  if (maxval == 0 || maxval > 65535) throw DomainError("PGM maxval must be in 1..65535");
  if (image.height == 0 || image.width == 0 || image.pixels.size() != image.height * image.width) {
    throw ShapeError("cannot encode an empty or inconsistent image");
  }
  const std::string header = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                             "\n" + std::to_string(maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const bool wide = maxval >= 256;
  out.reserve(out.size() + image.pixels.size() * (wide ? 2 : 1));
  for (float x : image.pixels) {
    const double c = std::clamp(static_cast<double>(x), 0.0, 1.0);
    const auto q = static_cast<std::uint32_t>(std::floor(c * maxval + 0.5));
    if (wide) out.push_back(static_cast<std::uint8_t>(q >> 8));
    out.push_back(static_cast<std::uint8_t>(q & 0xFF));
  }
  return out;
}

Image read(const std::filesystem::path& path) {
  if (auto& cb = observer()) cb(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  }
}

void write(const Image& image, const std::filesystem::path& path, std::uint32_t maxval) {
  const auto bytes = encode(image, maxval);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

ScopedReadObserver::ScopedReadObserver(Callback callback) : previous_(std::move(observer())) {
  observer() = std::move(callback);
}

ScopedReadObserver::~ScopedReadObserver() { observer() = std::move(previous_); }

}  // namespace wdsm::pgm
