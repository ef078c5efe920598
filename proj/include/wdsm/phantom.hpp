#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "wdsm/image.hpp"

namespace wdsm {

// One training/evaluation item. For phantoms, dense_truth is present and pd is
// exactly |dense_truth| / |breast_mask|.
struct Sample {
  Image image;
  Image breast_mask;
  double pd = 0.0;
  int class12 = 0;
  std::optional<Image> dense_truth;
};

struct PhantomOptions {
  // Overrides the sampled number of dense-tissue blobs (normally 3..8).
  std::optional<int> blob_count;
};

// Synthetic mammogram phantom: a half-ellipse breast on the left edge over a
// dark background, smooth fatty tissue, and dense tissue formed by
// thresholding a field of Gaussian bumps. The threshold is found by bisection
// so that the exact pixel ratio lands in grid bin `target_class12`.
//
// `size` must be a power of two >= 32. Throws GenerationError when the bin
// cannot be reached; callers retry with another seed.
Sample generate_phantom(std::uint64_t seed, std::size_t size, int target_class12,
                        const PhantomOptions& options = {});

bool is_valid_phantom_size(std::size_t size);

}  // namespace wdsm
