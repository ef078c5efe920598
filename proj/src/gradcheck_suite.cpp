#include "wdsm/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "wdsm/errors.hpp"
#include "wdsm/models.hpp"
#include "wdsm/ops.hpp"
#include "wdsm/rng.hpp"
#include "wdsm/weak_loss.hpp"

namespace wdsm {

namespace {

using D = Tensor<double>;
using Inputs = std::span<const D>;

constexpr double op_tolerance = 1e-4;
constexpr double composition_tolerance = 1e-3;

D random(Rng& rng, const Shape& shape, bool grad = true, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return D(shape, std::move(v), grad);
}

// Values in [-2,2] with |x - kink| >= gap.
D away_from(Rng& rng, const Shape& shape, double kink, double gap = 0.1) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    do x = rng.uniform(-2.0, 2.0);
    while (std::abs(x - kink) < gap);
  }
  return D(shape, std::move(v), true);
}

// Distinct values spaced >= 0.01 apart, so every 2x2 window has a clear max.
D distinct(Rng& rng, const Shape& shape) {
  const auto n = shape_numel(shape);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = -2.0 + 4.0 * static_cast<double>(i) / static_cast<double>(n);
  rng.shuffle(v.begin(), v.end());
  return D(shape, std::move(v), true);
}

D binary_mask(Rng& rng, std::size_t h, std::size_t w) {
  std::vector<double> v(h * w);
  for (auto& x : v) x = rng.uniform() < 0.6 ? 1.0 : 0.0;
  v[0] = 1.0;
  return D({h, w}, std::move(v), false);
}

// Disc-shaped breast mask, like a phantom's.
D disc_mask(std::size_t n) {
  std::vector<double> v(n * n);
  const double c = (static_cast<double>(n) - 1.0) / 2.0, r = 0.45 * static_cast<double>(n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double dy = static_cast<double>(y) - c, dx = static_cast<double>(x) - c;
      v[y * n + x] = dx * dx + dy * dy <= r * r ? 1.0 : 0.0;
    }
  return D({n, n}, std::move(v), false);
}

struct Case {
  std::vector<D> inputs;
  ScalarHead head;
  double tolerance = op_tolerance;
  bool skip_kinks = false;
};

// Contracts an arbitrary output with fixed weights drawn once per case.
std::function<D(Tape<double>&, const D&)> weighted_sum(Rng& rng) {
  auto cache = std::make_shared<std::map<Shape, D>>();
  const auto seed = rng.next();
  return [cache, seed](Tape<double>& t, const D& out) {
    auto it = cache->find(out.shape());
    if (it == cache->end()) {
      Rng r(seed);
      it = cache->emplace(out.shape(), random(r, out.shape(), false, 0.5, 1.5)).first;
    }
    return ops::reduce_sum(t, ops::mul(t, out, it->second));
  };
}

using Builder = std::function<Case(Rng&)>;

Case unary_case(Rng& rng, D x, std::function<D(Tape<double>&, const D&)> op) {
  auto w = weighted_sum(rng);
  return {{std::move(x)}, [op, w](Tape<double>& t, Inputs in) { return w(t, op(t, in[0])); }};
}

Case binary_case(Rng& rng, D a, D b, std::function<D(Tape<double>&, const D&, const D&)> op) {
  auto w = weighted_sum(rng);
  return {{std::move(a), std::move(b)}, [op, w](Tape<double>& t, Inputs in) { return w(t, op(t, in[0], in[1])); }};
}

Case composition_case(Rng& rng) {
  ModelConfig model = ModelConfig::defaults(ModelKind::unet_relu);
  model.unet.depth = 2;
  model.unet.base_channels = 4;
  auto params = init_params<double>(model, rng.next());
  std::vector<std::string> names;
  std::vector<D> inputs;
  for (auto& p : params) {
    names.push_back(p.name);
    // Small non-zero biases so no bias gradient is trivially structural.
    if (p.value.rank() == 1) p.value = random(rng, p.value.shape(), true, -0.1, 0.1);
    inputs.push_back(p.value);
  }
  const std::size_t n = 16;
  const D image = random(rng, {1, n, n}, false, 0.0, 1.0);
  const D breast = disc_mask(n);
  const double target = 0.35;
  const LossConfig loss{DensityTerm::l2, 0.1};
  const UNetConfig unet = model.unet;
  return {std::move(inputs),
          [names, image, breast, target, loss, unet](Tape<double>& t, Inputs in) {
            ParamList<double> ps;
            for (std::size_t i = 0; i < in.size(); ++i) ps.push_back({names[i], in[i]});
            const auto masks = unet_forward(unet, ps, t, image, breast);
            return weak_density_loss(t, masks, breast, target, loss).total;
          },
          composition_tolerance,
          /*skip_kinks=*/true};
}

const std::vector<std::pair<std::string, Builder>>& registry() {
  static const std::vector<std::pair<std::string, Builder>> cases = {
      {"conv2d",
       [](Rng& r) {
         auto w = weighted_sum(r);
         return Case{{random(r, {2, 6, 5}), random(r, {3, 2, 3, 3}), random(r, {3})},
                     [w](Tape<double>& t, Inputs in) { return w(t, ops::conv2d(t, in[0], in[1], in[2])); }};
       }},
      {"conv1x1",
       [](Rng& r) {
         auto w = weighted_sum(r);
         return Case{{random(r, {3, 4, 4}), random(r, {2, 3}), random(r, {2})},
                     [w](Tape<double>& t, Inputs in) { return w(t, ops::conv1x1(t, in[0], in[1], in[2])); }};
       }},
      {"maxpool2", [](Rng& r) { return unary_case(r, distinct(r, {2, 6, 8}), ops::maxpool2<double>); }},
      {"upsample2", [](Rng& r) { return unary_case(r, random(r, {2, 3, 4}), ops::upsample2<double>); }},
      {"concat_channels",
       [](Rng& r) { return binary_case(r, random(r, {2, 3, 3}), random(r, {1, 3, 3}), ops::concat_channels<double>); }},
      {"select_channel",
       [](Rng& r) {
         return unary_case(r, random(r, {3, 4, 4}), [](Tape<double>& t, const D& x) { return ops::select_channel(t, x, 1); });
       }},
      {"global_avg_pool", [](Rng& r) { return unary_case(r, random(r, {3, 4, 5}), ops::global_avg_pool<double>); }},
      {"linear",
       [](Rng& r) {
         auto w = weighted_sum(r);
         return Case{{random(r, {4}), random(r, {3, 4}), random(r, {3})},
                     [w](Tape<double>& t, Inputs in) { return w(t, ops::linear(t, in[0], in[1], in[2])); }};
       }},
      {"relu", [](Rng& r) { return unary_case(r, away_from(r, {4, 5}, 0.0), ops::relu<double>); }},
      {"sigmoid", [](Rng& r) { return unary_case(r, random(r, {4, 5}), ops::sigmoid<double>); }},
      {"softmax_channels", [](Rng& r) { return unary_case(r, random(r, {2, 4, 4}), ops::softmax_channels<double>); }},
      {"clamp_max",
       [](Rng& r) {
         return unary_case(r, away_from(r, {4, 5}, 1.0),
                           [](Tape<double>& t, const D& x) { return ops::clamp_max(t, x, 1.0); });
       }},
      {"mul_mask",
       [](Rng& r) {
         const D mask = binary_mask(r, 4, 5);
         return unary_case(r, random(r, {2, 4, 5}),
                           [mask](Tape<double>& t, const D& x) { return ops::mul_mask(t, x, mask); });
       }},
      {"reduce_sum", [](Rng& r) { return unary_case(r, random(r, {3, 4}), ops::reduce_sum<double>); }},
      {"reduce_mean", [](Rng& r) { return unary_case(r, random(r, {3, 4}), ops::reduce_mean<double>); }},
      {"add", [](Rng& r) { return binary_case(r, random(r, {3, 4}), random(r, {3, 4}), ops::add<double>); }},
      {"sub", [](Rng& r) { return binary_case(r, random(r, {3, 4}), random(r, {}), ops::sub<double>); }},
      {"mul", [](Rng& r) { return binary_case(r, random(r, {3, 4}), random(r, {3, 4}), ops::mul<double>); }},
      {"div",
       [](Rng& r) { return binary_case(r, random(r, {3, 4}), random(r, {3, 4}, true, 0.5, 2.0), ops::div<double>); }},
      {"abs", [](Rng& r) { return unary_case(r, away_from(r, {4, 5}, 0.0), ops::abs<double>); }},
      {"square", [](Rng& r) { return unary_case(r, random(r, {4, 5}), ops::square<double>); }},
      {"percent_density",
       [](Rng& r) {
         const D breast = binary_mask(r, 6, 6);
         return Case{{random(r, {6, 6}, true, 0.0, 1.0)},
                     [breast](Tape<double>& t, Inputs in) { return percent_density(t, in[0], breast); }};
       }},
      {"weak_density_loss",
       [](Rng& r) {
         const D breast = binary_mask(r, 6, 6);
         const double target = r.uniform(0.1, 0.9);
         return Case{{random(r, {6, 6}, true, 0.05, 0.95), random(r, {6, 6}, true, 0.05, 0.95)},
                     [breast, target](Tape<double>& t, Inputs in) {
                       const MaskPair<double> m{in[0], in[1]};
                       return weak_density_loss(t, m, breast, target, LossConfig{}).total;
                     }};
       }},
      {"unet_weak_loss", composition_case},
  };
  return cases;
}

}  // namespace

const std::vector<std::string>& gradcheck_op_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, _] : registry()) out.push_back(name);
    return out;
  }();
  return names;
}

std::vector<GradCheckRow> run_gradcheck_suite(std::uint64_t seed, const std::vector<std::string>& ops) {
  const auto& all = gradcheck_op_names();
  for (const auto& name : ops) {
    if (std::find(all.begin(), all.end(), name) == all.end()) {
      std::string valid;
      for (const auto& n : all) valid += (valid.empty() ? "" : ", ") + n;
      throw DomainError("unknown op '" + name + "' (valid: " + valid + ")");
    }
  }
  std::vector<GradCheckRow> rows;
  std::uint64_t stream = 0;
  for (const auto& [name, build] : registry()) {
    ++stream;
    if (!ops.empty() && std::find(ops.begin(), ops.end(), name) == ops.end()) continue;
    Rng rng(derive_seed(seed, stream));
    auto c = build(rng);
    GradCheckOptions opts;
    opts.tolerance = c.tolerance;
    opts.seed = rng.next();
    opts.skip_kinks = c.skip_kinks;
    const auto report = grad_check(c.head, c.inputs, opts);
    GradCheckRow row{name, report.max_rel_error(), c.tolerance, 0, 0};
    for (const auto& in : report.inputs) {
      row.coords_checked += in.coords_checked;
      row.kinks_skipped += in.kinks_skipped;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace wdsm
