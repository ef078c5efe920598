#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wdsm/models.hpp"
#include "wdsm/tensor.hpp"

namespace wdsm {

enum class DensityTerm { l1, l2 };

std::string to_string(DensityTerm term);
DensityTerm parse_density_term(const std::string& text);

struct LossConfig {
  DensityTerm density_term = DensityTerm::l2;
  double lambda_bin = 0.1;  // weight of the binarisation penalty, >= 0
};

struct LossReport {
  double total = 0.0;
  double density_term = 0.0;
  double bin_term = 0.0;
  double pd_hat = 0.0;
};

template <typename T>
struct WeakLoss {
  Tensor<T> total;
  Tensor<T> density_term;
  Tensor<T> bin_term;
  Tensor<T> pd_hat;

  LossReport report() const;
};

// Estimated percent density: sum(m_dense * breast) / |breast|. The gradient
// with respect to m_dense is exactly breast / |breast|.
template <typename T>
Tensor<T> percent_density(Tape<T>& tape, const Tensor<T>& m_dense, const Tensor<T>& breast_mask);

// Area-linkage loss
//   total = d(pd_hat, pd_target) + lambda_bin * sum(m (1 - m)) / |breast|
// with d the squared (l2) or absolute (l1) difference. The second term is zero
// only for {0,1}-valued masks and rules out the uniform-mask optimum.
template <typename T>
WeakLoss<T> weak_density_loss(Tape<T>& tape, const MaskPair<T>& masks, const Tensor<T>& breast_mask,
                              double pd_target, const LossConfig& config);

template <typename T>
struct LossSample {
  Tensor<T> image;        // [1,H,W]
  Tensor<T> breast_mask;  // [H,W]
  double pd_target = 0.0;
};

template <typename T>
using MaskForward = std::function<MaskPair<T>(Tape<T>&, const LossSample<T>&)>;

template <typename T>
struct BatchLoss {
  Tensor<T> mean_total;
  LossReport mean;
  std::vector<LossReport> per_sample;
};

template <typename T>
BatchLoss<T> batch_loss(Tape<T>& tape, std::span<const LossSample<T>> samples, const MaskForward<T>& forward,
                        const LossConfig& config);

}  // namespace wdsm
