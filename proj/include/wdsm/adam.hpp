#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wdsm/models.hpp"

namespace wdsm {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of a single buffer at step t >= 1:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
               const AdamConfig& config, std::int64_t t);

// Adam over a whole parameter list, owning the moment buffers.
template <typename T>
class Adam {
 public:
  Adam(const ParamList<T>& params, AdamConfig config);

  // Applies one step using the gradients currently stored on the parameters.
  void step(ParamList<T>& params);
  std::int64_t steps() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<std::vector<T>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace wdsm
