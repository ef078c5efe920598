#include "wdsm/adam.hpp"

#include <cmath>

#include "wdsm/errors.hpp"

namespace wdsm {

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
               const AdamConfig& config, std::int64_t t) {
  if (t < 1) throw DomainError("adam_step: t must be >= 1");
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state sizes differ");
  }
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double mi = b1 * m[i] + (1.0 - b1) * g;
    const double vi = b2 * v[i] + (1.0 - b2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double update = config.lr * (mi / c1) / (std::sqrt(vi / c2) + config.eps);
    params[i] = static_cast<T>(params[i] - update);
  }
}

template <typename T>
Adam<T>::Adam(const ParamList<T>& params, AdamConfig config) : config_(config) {
  for (const auto& p : params) {
    m_.emplace_back(p.value.numel(), T(0));
    v_.emplace_back(p.value.numel(), T(0));
  }
}

template <typename T>
void Adam<T>::step(ParamList<T>& params) {
  if (params.size() != m_.size()) throw ShapeError("Adam: parameter list changed size");
  ++t_;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k].value;
    if (!p.requires_grad()) continue;
    adam_step<T>(p.mutable_data(), p.grad(), m_[k], v_[k], config_, t_);
  }
}

template void adam_step<float>(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                               const AdamConfig&, std::int64_t);
template void adam_step<double>(std::span<double>, std::span<const double>, std::span<double>,
                                std::span<double>, const AdamConfig&, std::int64_t);
template class Adam<float>;
template class Adam<double>;

}  // namespace wdsm
