#include "wdsm/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wdsm/errors.hpp"
#include "wdsm/rng.hpp"

namespace wdsm {

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& in : inputs) worst = std::max(worst, in.max_rel_error);
  return worst;
}

namespace {

double evaluate(const ScalarHead& head, std::span<const Tensor<double>> inputs) {
  Tape<double> tape;
  const auto out = head(tape, inputs);
  if (out.numel() != 1) {
    throw ContractError("grad_check: head must return a scalar, got shape " + shape_string(out.shape()));
  }
  return out.item();
}

std::vector<std::size_t> sample_coords(std::size_t n, std::size_t max_coords, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n <= max_coords) return idx;
  rng.shuffle(idx.begin(), idx.end());
  idx.resize(max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport grad_check(const ScalarHead& head, std::vector<Tensor<double>> inputs,
                           const GradCheckOptions& options) {
  for (auto& in : inputs) in.zero_grad();
  {
    Tape<double> tape;
    const auto out = head(tape, inputs);
    if (out.numel() != 1) {
      throw ContractError("grad_check: head must return a scalar, got shape " + shape_string(out.shape()));
    }
    tape.backward(out);
  }

  GradCheckReport report;
  report.tolerance = options.tolerance;
  const double f0 = options.skip_kinks ? evaluate(head, inputs) : 0.0;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); };
  Rng rng(options.seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& in = inputs[k];
    if (!in.requires_grad()) continue;
    InputGradError err;
    err.input = k;
    const auto analytic = std::vector<double>(in.grad().begin(), in.grad().end());
    for (auto i : sample_coords(in.numel(), options.max_coords, rng)) {
      auto values = in.mutable_data();
      const double x0 = values[i];
      const double h = 1e-5 * std::max(1.0, std::abs(x0));
      values[i] = x0 + h;
      const double f_plus = evaluate(head, inputs);
      values[i] = x0 - h;
      const double f_minus = evaluate(head, inputs);
      values[i] = x0;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = analytic[i];
      const double e = rel(a, numeric);
      if (options.skip_kinks && e >= options.tolerance &&
          (rel(a, (f_plus - f0) / h) < options.tolerance || rel(a, (f0 - f_minus) / h) < options.tolerance)) {
        ++err.kinks_skipped;
        continue;
      }
      err.max_rel_error = std::max(err.max_rel_error, e);
      ++err.coords_checked;
    }
    report.inputs.push_back(err);
  }
  return report;
}

}  // namespace wdsm
