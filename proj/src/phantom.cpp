#include "wdsm/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "wdsm/density_grid.hpp"
#include "wdsm/errors.hpp"
#include "wdsm/rng.hpp"

namespace wdsm {
namespace {

// The blob field is compared in fixed point so the threshold search does not
// depend on the last bits of exp().
constexpr double kFieldScale = 16777216.0;  // 2^24
constexpr int kMaxBisection = 64;

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Bilinear value noise on a (cells+1)^2 lattice, values in [0,1].
std::vector<double> value_noise(Rng& rng, std::size_t size, std::size_t cells) {
  const std::size_t n = cells + 1;
  std::vector<double> lattice(n * n);
  for (auto& v : lattice) v = rng.uniform();
  std::vector<double> out(size * size);
  const double step = static_cast<double>(cells) / static_cast<double>(size);
  for (std::size_t y = 0; y < size; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) * step;
    const auto iy = std::min(static_cast<std::size_t>(fy), cells - 1);
    const double ty = smoothstep(fy - static_cast<double>(iy));
    for (std::size_t x = 0; x < size; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) * step;
      const auto ix = std::min(static_cast<std::size_t>(fx), cells - 1);
      const double tx = smoothstep(fx - static_cast<double>(ix));
      const double v00 = lattice[iy * n + ix], v01 = lattice[iy * n + ix + 1];
      const double v10 = lattice[(iy + 1) * n + ix], v11 = lattice[(iy + 1) * n + ix + 1];
      const double top = v00 + (v01 - v00) * tx;
      const double bottom = v10 + (v11 - v10) * tx;
      out[y * size + x] = top + (bottom - top) * ty;
    }
  }
  return out;
}

struct Blob {
  double cy, cx, sigma, amplitude;
};

}  // namespace

bool is_valid_phantom_size(std::size_t size) { return size >= 32 && (size & (size - 1)) == 0; }

Sample generate_phantom(std::uint64_t seed, std::size_t size, int target_class12, const PhantomOptions& options) {
  if (!is_valid_phantom_size(size)) {
    throw DomainError("size must be a power of two >= 32, got " + std::to_string(size));
  }
  if (target_class12 < 0 || target_class12 >= density::kGridClasses) {
    throw DomainError("target class must lie in 0..11, got " + std::to_string(target_class12));
  }
  if (options.blob_count && *options.blob_count < 0) throw DomainError("blob count must be non-negative");

  Rng rng(seed);
  const double s = static_cast<double>(size);

  // Breast: half-ellipse centred on the left edge, mid-height.
  const double semi_x = rng.uniform(0.6, 0.95) * s;
  const double semi_y = rng.uniform(0.6, 0.95) * s / 2.0;
  const double centre_y = s / 2.0;
  Image breast(size, size);
  std::vector<std::size_t> breast_pixels;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / semi_x;
      const double v = (static_cast<double>(y) + 0.5 - centre_y) / semi_y;
      if (u * u + v * v <= 1.0) {
        breast.at(y, x) = 1.0f;
        breast_pixels.push_back(y * size + x);
      }
    }
  }
  if (breast_pixels.empty()) throw GenerationError("degenerate phantom: empty breast region");

  const auto background = value_noise(rng, size, 4);
  const auto fat_coarse = value_noise(rng, size, 4);
  const auto fat_fine = value_noise(rng, size, 8);
  const auto modulation = value_noise(rng, size, 8);
  const auto floor_noise = value_noise(rng, size, 4);

  const int blob_count = options.blob_count ? *options.blob_count : 3 + static_cast<int>(rng.below(6));
  std::vector<Blob> blobs;
  for (int i = 0; i < blob_count; ++i) {
    const auto p = breast_pixels[rng.below(breast_pixels.size())];
    Blob b;
    b.cy = static_cast<double>(p / size) + 0.5;
    b.cx = static_cast<double>(p % size) + 0.5;
    b.sigma = rng.uniform(0.05, 0.15) * s;
    b.amplitude = rng.uniform(0.5, 1.0);
    blobs.push_back(b);
  }
  const double target_fraction = rng.uniform(0.1, 0.9);

  // Fixed-point density field over breast pixels; zero elsewhere.
  std::vector<std::int64_t> field(size * size, 0);
  std::int64_t field_max = 0;
  if (!blobs.empty()) {
    for (auto p : breast_pixels) {
      const double py = static_cast<double>(p / size) + 0.5;
      const double px = static_cast<double>(p % size) + 0.5;
      double f = 0.0;
      for (const auto& b : blobs) {
        const double d2 = (py - b.cy) * (py - b.cy) + (px - b.cx) * (px - b.cx);
        f += b.amplitude * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
      }
      f = f * (0.5 + modulation[p]) + 0.02 * floor_noise[p];
      field[p] = std::llround(f * kFieldScale);
      field_max = std::max(field_max, field[p]);
    }
  }

  const auto breast_count = static_cast<std::int64_t>(breast_pixels.size());
  auto dense_count = [&](std::int64_t threshold) {
    std::int64_t n = 0;
    for (auto p : breast_pixels) n += field[p] >= threshold ? 1 : 0;
    return n;
  };
  auto ratio = [&](std::int64_t count) { return static_cast<double>(count) / static_cast<double>(breast_count); };
  auto in_bin = [&](std::int64_t count) { return density::pd_to_class12(ratio(count)) == target_class12; };

  // Largest field value counts as dense only when the threshold is <= it, so a
  // threshold of field_max + 1 yields an empty dense region.
  std::int64_t threshold = field_max + 1;
  if (!blobs.empty()) {
    const double target_pd = (target_class12 + target_fraction) / density::kGridClasses;
    std::int64_t lo = 1;              // pd(lo) >= target
    std::int64_t hi = field_max + 1;  // pd(hi) == 0 < target
    for (int it = 0; it < kMaxBisection && hi - lo > 1; ++it) {
      const std::int64_t mid = lo + (hi - lo) / 2;
      if (ratio(dense_count(mid)) >= target_pd) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    const auto c_lo = dense_count(lo), c_hi = dense_count(hi);
    const double e_lo = std::abs(ratio(c_lo) - target_pd), e_hi = std::abs(ratio(c_hi) - target_pd);
    if (in_bin(c_lo) && (!in_bin(c_hi) || e_lo <= e_hi)) {
      threshold = lo;
    } else if (in_bin(c_hi)) {
      threshold = hi;
    } else {
      throw GenerationError("phantom threshold search could not reach class " + std::to_string(target_class12));
    }
  } else if (target_class12 != 0) {
    throw GenerationError("phantom without dense blobs can only realise class 0");
  }

  Sample out;
  out.breast_mask = std::move(breast);
  Image dense(size, size);
  Image image(size, size);
  const double span = static_cast<double>(field_max - threshold + 1);
  for (std::size_t p = 0; p < size * size; ++p) {
    double v;
    if (out.breast_mask.pixels[p] == 0.0f) {
      v = 0.02 + 0.03 * background[p];
    } else if (field[p] >= threshold && !blobs.empty()) {
      dense.pixels[p] = 1.0f;
      const double strength = static_cast<double>(field[p] - threshold) / span;
      v = 0.55 + 0.35 * strength + rng.uniform(-0.05, 0.05);
    } else {
      v = 0.2 + 0.3 * (0.65 * fat_coarse[p] + 0.35 * fat_fine[p]);
    }
    image.pixels[p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  std::int64_t count = 0;
  for (float d : dense.pixels) count += d != 0.0f ? 1 : 0;

  out.image = std::move(image);
  out.pd = ratio(count);
  out.class12 = density::pd_to_class12(out.pd);
  out.dense_truth = std::move(dense);
  return out;
}

}  // namespace wdsm
