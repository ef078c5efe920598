#include "wdsm/weak_loss.hpp"

#include "wdsm/errors.hpp"
#include "wdsm/ops.hpp"

namespace wdsm {

std::string to_string(DensityTerm term) { return term == DensityTerm::l1 ? "l1" : "l2"; }

DensityTerm parse_density_term(const std::string& text) {
  if (text == "l1") return DensityTerm::l1;
  if (text == "l2") return DensityTerm::l2;
  throw DomainError("density term must be l1 or l2, got '" + text + "'");
}

template <typename T>
LossReport WeakLoss<T>::report() const {
  return {static_cast<double>(total.item()), static_cast<double>(density_term.item()),
          static_cast<double>(bin_term.item()), static_cast<double>(pd_hat.item())};
}

namespace {

template <typename T>
T breast_area(const Tensor<T>& breast_mask) {
  T area = 0;
  for (T v : breast_mask.data()) area += v;
  if (area <= T(0)) throw DomainError("empty breast mask");
  return area;
}

}  // namespace

template <typename T>
Tensor<T> percent_density(Tape<T>& tape, const Tensor<T>& m_dense, const Tensor<T>& breast_mask) {
  if (m_dense.shape() != breast_mask.shape()) {
    throw ShapeError("percent_density: mask " + shape_string(m_dense.shape()) + " vs breast " +
                     shape_string(breast_mask.shape()));
  }
  const T area = breast_area(breast_mask);
  const auto inside = ops::mul_mask(tape, m_dense, breast_mask);
  return ops::div(tape, ops::reduce_sum(tape, inside), Tensor<T>::scalar(area));
}

template <typename T>
WeakLoss<T> weak_density_loss(Tape<T>& tape, const MaskPair<T>& masks, const Tensor<T>& breast_mask,
                              double pd_target, const LossConfig& config) {
  if (!(pd_target >= 0.0 && pd_target <= 1.0)) throw DomainError("pd_target must lie in [0,1]");
  if (!(config.lambda_bin >= 0.0)) throw DomainError("lambda_bin must be non-negative");
  const T area = breast_area(breast_mask);

  WeakLoss<T> out;
  out.pd_hat = percent_density(tape, masks.dense, breast_mask);
  const auto diff = ops::sub(tape, out.pd_hat, Tensor<T>::scalar(static_cast<T>(pd_target)));
  out.density_term = config.density_term == DensityTerm::l2 ? ops::square(tape, diff) : ops::abs(tape, diff);

  const auto& m = masks.dense;
  const auto spread = ops::mul(tape, m, ops::sub(tape, Tensor<T>::scalar(T(1)), m));
  out.bin_term = ops::div(tape, ops::reduce_sum(tape, spread), Tensor<T>::scalar(area));

  out.total = ops::add(tape, out.density_term,
                       ops::mul(tape, out.bin_term, Tensor<T>::scalar(static_cast<T>(config.lambda_bin))));
  return out;
}

template <typename T>
BatchLoss<T> batch_loss(Tape<T>& tape, std::span<const LossSample<T>> samples, const MaskForward<T>& forward,
                        const LossConfig& config) {
  if (samples.empty()) throw DomainError("batch_loss: empty batch");
  BatchLoss<T> out;
  Tensor<T> sum;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto masks = forward(tape, samples[i]);
    const auto loss = weak_density_loss(tape, masks, samples[i].breast_mask, samples[i].pd_target, config);
    out.per_sample.push_back(loss.report());
    sum = i == 0 ? loss.total : ops::add(tape, sum, loss.total);
  }
  const auto n = static_cast<T>(samples.size());
  out.mean_total = ops::div(tape, sum, Tensor<T>::scalar(n));
  for (const auto& r : out.per_sample) {
    out.mean.total += r.total;
    out.mean.density_term += r.density_term;
    out.mean.bin_term += r.bin_term;
    out.mean.pd_hat += r.pd_hat;
  }
  const double dn = static_cast<double>(samples.size());
  out.mean.total /= dn;
  out.mean.density_term /= dn;
  out.mean.bin_term /= dn;
  out.mean.pd_hat /= dn;
  return out;
}

#define WDSM_INSTANTIATE_LOSS(T)                                                                          \
  template struct WeakLoss<T>;                                                                            \
  template Tensor<T> percent_density<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                    \
  template WeakLoss<T> weak_density_loss<T>(Tape<T>&, const MaskPair<T>&, const Tensor<T>&, double,       \
                                            const LossConfig&);                                           \
  template BatchLoss<T> batch_loss<T>(Tape<T>&, std::span<const LossSample<T>>, const MaskForward<T>&,   \
                                      const LossConfig&);

WDSM_INSTANTIATE_LOSS(float)
WDSM_INSTANTIATE_LOSS(double)

#undef WDSM_INSTANTIATE_LOSS

}  // namespace wdsm
