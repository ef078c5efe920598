#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "wdsm/tensor.hpp"

namespace wdsm {

// A function of the probed inputs that must return a one-element tensor.
using ScalarHead = std::function<Tensor<double>(Tape<double>&, std::span<const Tensor<double>>)>;

struct GradCheckOptions {
  double tolerance = 1e-4;
  // Coordinates probed per input; inputs with fewer elements are probed fully.
  std::size_t max_coords = 64;
  std::uint64_t seed = 0;
  // Skip coordinates whose +-h probe straddles a non-differentiable point:
  // the central difference misses but the analytic value matches one of the
  // one-sided differences. Skipped coordinates are counted, not hidden.
  bool skip_kinks = false;
};

struct InputGradError {
  std::size_t input = 0;
  std::size_t coords_checked = 0;
  std::size_t kinks_skipped = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<InputGradError> inputs;
  double tolerance = 0.0;

  double max_rel_error() const;
  bool passed() const { return max_rel_error() < tolerance; }
};

// Compares reverse-mode gradients against central differences with step
// h = 1e-5 * max(1, |x|). Only inputs with requires_grad() are probed. The
// error per coordinate is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(const ScalarHead& head, std::vector<Tensor<double>> inputs,
                           const GradCheckOptions& options = {});

}  // namespace wdsm
