#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wdsm/grad_check.hpp"

namespace wdsm {

struct GradCheckRow {
  std::string op;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t coords_checked = 0;
  std::size_t kinks_skipped = 0;
  bool passed() const { return max_rel_error < tolerance; }
};

// Names accepted by run_gradcheck_suite, in default run order.
const std::vector<std::string>& gradcheck_op_names();

// Checks each named case in double precision: random inputs in [-2,2] kept
// away from non-differentiable points, reduced to a scalar through fixed
// random weights. Single ops use tolerance 1e-4; the whole
// unet_relu -> weak_density_loss composition at 16x16 uses 1e-3 and skips
// probes that straddle a relu, clamp or maxpool switch.
// An empty list runs every case. Unknown names throw DomainError.
std::vector<GradCheckRow> run_gradcheck_suite(std::uint64_t seed, const std::vector<std::string>& ops = {});

}  // namespace wdsm
