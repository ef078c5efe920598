#include "wdsm/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "wdsm/errors.hpp"

namespace wdsm::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

template <typename T, typename... Rest>
bool any_grad(const Tensor<T>& first, const Rest&... rest) {
  return (first.requires_grad() || ... || rest.requires_grad());
}

void expect_rank(const Shape& shape, std::size_t rank, const char* op, const char* what) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_string(shape));
  }
}

// im2col for a 3x3 pad-1 window: col[(c*9 + ky*3 + kx), y*W + x].
template <typename T>
void im2col3x3(const T* src, std::size_t channels, std::size_t h, std::size_t w, T* col) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = src + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = col + (c * 9 + static_cast<std::size_t>(ky * 3 + kx)) * hw;
        const int dx = kx - 1;
        const std::size_t x_lo = dx < 0 ? 1 : 0;
        const std::size_t x_hi = dx > 0 ? w - 1 : w;
        for (std::size_t y = 0; y < h; ++y) {
          T* out = row + y * w;
          const long sy = static_cast<long>(y) + ky - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(out, out + w, T(0));
            continue;
          }
          const T* in = plane + static_cast<std::size_t>(sy) * w;
          if (x_lo > 0) out[0] = T(0);
          if (x_hi < w) out[w - 1] = T(0);
          for (std::size_t x = x_lo; x < x_hi; ++x) out[x] = in[static_cast<long>(x) + dx];
        }
      }
    }
  }
}

template <typename T>
void col2im3x3_add(const T* col, std::size_t channels, std::size_t h, std::size_t w, T* dst) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = dst + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = col + (c * 9 + static_cast<std::size_t>(ky * 3 + kx)) * hw;
        const int dx = kx - 1;
        const std::size_t x_lo = dx < 0 ? 1 : 0;
        const std::size_t x_hi = dx > 0 ? w - 1 : w;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + ky - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          const T* in = row + y * w;
          T* out = plane + static_cast<std::size_t>(sy) * w;
          for (std::size_t x = x_lo; x < x_hi; ++x) out[static_cast<long>(x) + dx] += in[x];
        }
      }
    }
  }
}

enum class Broadcast { none, a_scalar, b_scalar };

template <typename T>
Broadcast broadcast_kind(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::none;
  if (a.rank() == 0) return Broadcast::a_scalar;
  if (b.rank() == 0) return Broadcast::b_scalar;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()));
}

// Shared driver for the four elementwise binary ops. `fwd(a, b)` computes the
// value; `da(a, b)` and `db(a, b)` are the local partials.
template <typename T, typename Fwd, typename Da, typename Db>
Tensor<T> binary(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b, const char* name, Fwd fwd,
                 Da da, Db db) {
  const auto kind = broadcast_kind(a, b, name);
  const Shape shape = kind == Broadcast::a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(shape);
  const auto av = a.data();
  const auto bv = b.data();
  auto at_a = [=](std::size_t i) { return kind == Broadcast::a_scalar ? av[0] : av[i]; };
  auto at_b = [=](std::size_t i) { return kind == Broadcast::b_scalar ? bv[0] : bv[i]; };

  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(at_a(i), at_b(i));
  Tensor<T> result(shape, std::move(out), any_grad(a, b));
  if (!result.requires_grad()) return result;

  tape.record([a, b, result, kind, n, da, db]() mutable {
    const auto g = result.grad();
    const auto av = a.data();
    const auto bv = b.data();
    auto at_a = [&](std::size_t i) { return kind == Broadcast::a_scalar ? av[0] : av[i]; };
    auto at_b = [&](std::size_t i) { return kind == Broadcast::b_scalar ? bv[0] : bv[i]; };
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < n; ++i) {
        ga[kind == Broadcast::a_scalar ? 0 : i] += g[i] * da(at_a(i), at_b(i));
      }
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < n; ++i) {
        gb[kind == Broadcast::b_scalar ? 0 : i] += g[i] * db(at_a(i), at_b(i));
      }
    }
  });
  return result;
}

// Shared driver for elementwise unary ops; `local(x, y)` is dy/dx given the
// input and output values.
template <typename T, typename Fwd, typename Local>
Tensor<T> unary(Tape<T>& tape, const Tensor<T>& x, Fwd fwd, Local local) {
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  Tensor<T> result(x.shape(), std::move(out), x.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([x, result, local]() mutable {
    const auto g = result.grad();
    const auto xv = x.data();
    const auto yv = result.data();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g[i] * local(xv[i], yv[i]);
  });
  return result;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias) {
  expect_rank(x.shape(), 3, "conv2d", "input");
  expect_rank(kernel.shape(), 4, "conv2d", "kernel");
  expect_rank(bias.shape(), 1, "conv2d", "bias");
  const std::size_t c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t c_out = kernel.dim(0);
  if (kernel.dim(1) != c_in || kernel.dim(2) != 3 || kernel.dim(3) != 3) {
    throw ShapeError("conv2d: kernel " + shape_string(kernel.shape()) + " incompatible with input " +
                     shape_string(x.shape()));
  }
  if (bias.dim(0) != c_out) {
    throw ShapeError("conv2d: bias " + shape_string(bias.shape()) + " does not match " +
                     std::to_string(c_out) + " output channels");
  }
  const std::size_t hw = h * w;
  const std::size_t k = c_in * 9;

  AlignedVector<T> col(k * hw);
  im2col3x3(x.data().data(), c_in, h, w, col.data());
  Tensor<T> result = Tensor<T>::zeros({c_out, h, w}, any_grad(x, kernel, bias));
  {
    MutMap<T> o(result.mutable_data().data(), static_cast<Eigen::Index>(c_out), static_cast<Eigen::Index>(hw));
    ConstMap<T> wm(kernel.data().data(), static_cast<Eigen::Index>(c_out), static_cast<Eigen::Index>(k));
    ConstMap<T> cm(col.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(hw));
    o.noalias() = wm * cm;
    const auto bv = bias.data();
    for (std::size_t c = 0; c < c_out; ++c) o.row(static_cast<Eigen::Index>(c)).array() += bv[c];
  }
  if (!result.requires_grad()) return result;

  tape.record([x, kernel, bias, result, c_in, c_out, h, w, hw, k]() mutable {
    const auto rows = static_cast<Eigen::Index>(c_out);
    const auto cols = static_cast<Eigen::Index>(hw);
    const auto depth = static_cast<Eigen::Index>(k);
    ConstMap<T> g(result.grad().data(), rows, cols);
    if (bias.requires_grad()) {
      auto gb = bias.mutable_grad();
      for (Eigen::Index c = 0; c < rows; ++c) gb[static_cast<std::size_t>(c)] += g.row(c).sum();
    }
    if (kernel.requires_grad()) {
      AlignedVector<T> col(k * hw);
      im2col3x3(x.data().data(), c_in, h, w, col.data());
      ConstMap<T> cm(col.data(), depth, cols);
      MutMap<T> gw(kernel.mutable_grad().data(), rows, depth);
      gw.noalias() += g * cm.transpose();
    }
    if (x.requires_grad()) {
      AlignedVector<T> dcol(k * hw);
      MutMap<T> dc(dcol.data(), depth, cols);
      ConstMap<T> wm(kernel.data().data(), rows, depth);
      dc.noalias() = wm.transpose() * g;
      col2im3x3_add(dcol.data(), c_in, h, w, x.mutable_grad().data());
    }
  });
  return result;
}

template <typename T>
Tensor<T> conv1x1(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  expect_rank(x.shape(), 3, "conv1x1", "input");
  expect_rank(weight.shape(), 2, "conv1x1", "weight");
  expect_rank(bias.shape(), 1, "conv1x1", "bias");
  const std::size_t c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t c_out = weight.dim(0);
  if (weight.dim(1) != c_in || bias.dim(0) != c_out) {
    throw ShapeError("conv1x1: weight " + shape_string(weight.shape()) + " / bias " +
                     shape_string(bias.shape()) + " incompatible with input " + shape_string(x.shape()));
  }
  const std::size_t hw = h * w;
  const auto rows = static_cast<Eigen::Index>(c_out);
  const auto cols = static_cast<Eigen::Index>(hw);
  const auto depth = static_cast<Eigen::Index>(c_in);
  Tensor<T> result = Tensor<T>::zeros({c_out, h, w}, any_grad(x, weight, bias));
  {
    MutMap<T> o(result.mutable_data().data(), rows, cols);
    o.noalias() = ConstMap<T>(weight.data().data(), rows, depth) * ConstMap<T>(x.data().data(), depth, cols);
    const auto bv = bias.data();
    for (Eigen::Index c = 0; c < rows; ++c) o.row(c).array() += bv[static_cast<std::size_t>(c)];
  }
  if (!result.requires_grad()) return result;

  tape.record([x, weight, bias, result, rows, cols, depth]() mutable {
    ConstMap<T> g(result.grad().data(), rows, cols);
    if (bias.requires_grad()) {
      auto gb = bias.mutable_grad();
      for (Eigen::Index c = 0; c < rows; ++c) gb[static_cast<std::size_t>(c)] += g.row(c).sum();
    }
    if (weight.requires_grad()) {
      MutMap<T>(weight.mutable_grad().data(), rows, depth).noalias() +=
          g * ConstMap<T>(x.data().data(), depth, cols).transpose();
    }
    if (x.requires_grad()) {
      MutMap<T>(x.mutable_grad().data(), depth, cols).noalias() +=
          ConstMap<T>(weight.data().data(), rows, depth).transpose() * g;
    }
  });
  return result;
}

template <typename T>
Tensor<T> maxpool2(Tape<T>& tape, const Tensor<T>& x) {
  expect_rank(x.shape(), 3, "maxpool2", "input");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2: spatial size must be even, got " + shape_string(x.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  const auto xv = x.data();
  std::vector<T> out(c * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const std::size_t base = ch * h * w + 2 * y * w + 2 * xx;
        const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = cand[0];
        // Strict comparison keeps the first maximum in row-major order.
        for (int i = 1; i < 4; ++i) {
          if (xv[cand[i]] > xv[best]) best = cand[i];
        }
        const std::size_t o = ch * oh * ow + y * ow + xx;
        out[o] = xv[best];
        argmax[o] = best;
      }
    }
  }
  Tensor<T> result({c, oh, ow}, std::move(out), x.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([x, result, argmax = std::move(argmax)]() mutable {
    const auto g = result.grad();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
  });
  return result;
}

template <typename T>
Tensor<T> upsample2(Tape<T>& tape, const Tensor<T>& x) {
  expect_rank(x.shape(), 3, "upsample2", "input");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = 2 * h, ow = 2 * w;
  const auto xv = x.data();
  std::vector<T> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      const T* src = xv.data() + ch * h * w + (y / 2) * w;
      T* dst = out.data() + ch * oh * ow + y * ow;
      for (std::size_t xx = 0; xx < ow; ++xx) dst[xx] = src[xx / 2];
    }
  }
  Tensor<T> result({c, oh, ow}, std::move(out), x.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([x, result, c, h, w, oh, ow]() mutable {
    const auto g = result.grad();
    auto gx = x.mutable_grad();
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < oh; ++y) {
        const T* src = g.data() + ch * oh * ow + y * ow;
        T* dst = gx.data() + ch * h * w + (y / 2) * w;
        for (std::size_t xx = 0; xx < ow; ++xx) dst[xx / 2] += src[xx];
      }
    }
  });
  return result;
}

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  expect_rank(a.shape(), 3, "concat_channels", "first input");
  expect_rank(b.shape(), 3, "concat_channels", "second input");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw ShapeError("concat_channels: spatial mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  std::vector<T> out;
  out.reserve(a.numel() + b.numel());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  Tensor<T> result({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(out), any_grad(a, b));
  if (!result.requires_grad()) return result;
  tape.record([a, b, result]() mutable {
    const auto g = result.grad();
    const std::size_t split = a.numel();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < split; ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[split + i];
    }
  });
  return result;
}

template <typename T>
Tensor<T> select_channel(Tape<T>& tape, const Tensor<T>& x, std::size_t channel) {
  expect_rank(x.shape(), 3, "select_channel", "input");
  if (channel >= x.dim(0)) {
    throw ShapeError("select_channel: channel " + std::to_string(channel) + " out of range for " +
                     shape_string(x.shape()));
  }
  const std::size_t plane = x.dim(1) * x.dim(2);
  const auto first = x.data().begin() + static_cast<std::ptrdiff_t>(channel * plane);
  Tensor<T> result({x.dim(1), x.dim(2)}, std::vector<T>(first, first + static_cast<std::ptrdiff_t>(plane)),
                   x.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([x, result, channel, plane]() mutable {
    const auto g = result.grad();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < plane; ++i) gx[channel * plane + i] += g[i];
  });
  return result;
}

template <typename T>
Tensor<T> global_avg_pool(Tape<T>& tape, const Tensor<T>& x) {
  expect_rank(x.shape(), 3, "global_avg_pool", "input");
  const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
  const auto xv = x.data();
  std::vector<T> out(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    T s = 0;
    for (std::size_t i = 0; i < plane; ++i) s += xv[ch * plane + i];
    out[ch] = s / static_cast<T>(plane);
  }
  Tensor<T> result({c}, std::move(out), x.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([x, result, c, plane]() mutable {
    const auto g = result.grad();
    auto gx = x.mutable_grad();
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T v = g[ch] / static_cast<T>(plane);
      for (std::size_t i = 0; i < plane; ++i) gx[ch * plane + i] += v;
    }
  });
  return result;
}

template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  expect_rank(x.shape(), 1, "linear", "input");
  expect_rank(weight.shape(), 2, "linear", "weight");
  expect_rank(bias.shape(), 1, "linear", "bias");
  const std::size_t n_in = x.dim(0), n_out = weight.dim(0);
  if (weight.dim(1) != n_in || bias.dim(0) != n_out) {
    throw ShapeError("linear: weight " + shape_string(weight.shape()) + " / bias " +
                     shape_string(bias.shape()) + " incompatible with input " + shape_string(x.shape()));
  }
  const auto xv = x.data(), wv = weight.data(), bv = bias.data();
  std::vector<T> out(n_out);
  for (std::size_t o = 0; o < n_out; ++o) {
    T s = bv[o];
    for (std::size_t i = 0; i < n_in; ++i) s += wv[o * n_in + i] * xv[i];
    out[o] = s;
  }
  Tensor<T> result({n_out}, std::move(out), any_grad(x, weight, bias));
  if (!result.requires_grad()) return result;
  tape.record([x, weight, bias, result, n_in, n_out]() mutable {
    const auto g = result.grad();
    const auto xv = x.data(), wv = weight.data();
    if (bias.requires_grad()) {
      auto gb = bias.mutable_grad();
      for (std::size_t o = 0; o < n_out; ++o) gb[o] += g[o];
    }
    if (weight.requires_grad()) {
      auto gw = weight.mutable_grad();
      for (std::size_t o = 0; o < n_out; ++o)
        for (std::size_t i = 0; i < n_in; ++i) gw[o * n_in + i] += g[o] * xv[i];
    }
    if (x.requires_grad()) {
      auto gx = x.mutable_grad();
      for (std::size_t o = 0; o < n_out; ++o)
        for (std::size_t i = 0; i < n_in; ++i) gx[i] += g[o] * wv[o * n_in + i];
    }
  });
  return result;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
  return unary(
      tape, x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
  return unary(
      tape, x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> softmax_channels(Tape<T>& tape, const Tensor<T>& x) {
  expect_rank(x.shape(), 3, "softmax_channels", "input");
  if (x.dim(0) != 2) {
    throw ShapeError("softmax_channels: expects exactly 2 channels, got " + shape_string(x.shape()));
  }
  const std::size_t plane = x.dim(1) * x.dim(2);
  const auto xv = x.data();
  std::vector<T> out(2 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    // Two-way softmax is a sigmoid of the logit difference.
    const T d = xv[i] - xv[plane + i];
    T p0;
    if (d >= T(0)) {
      p0 = T(1) / (T(1) + std::exp(-d));
    } else {
      const T e = std::exp(d);
      p0 = e / (T(1) + e);
    }
    out[i] = p0;
    out[plane + i] = T(1) - p0;
  }
  Tensor<T> result(x.shape(), std::move(out), x.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([x, result, plane]() mutable {
    const auto g = result.grad();
    const auto y = result.data();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < plane; ++i) {
      // dL/dz_c = y_c (g_c - sum_k g_k y_k)
      const T dot = g[i] * y[i] + g[plane + i] * y[plane + i];
      gx[i] += y[i] * (g[i] - dot);
      gx[plane + i] += y[plane + i] * (g[plane + i] - dot);
    }
  });
  return result;
}

template <typename T>
Tensor<T> clamp_max(Tape<T>& tape, const Tensor<T>& x, T limit) {
  return unary(
      tape, x, [limit](T v) { return v < limit ? v : limit; },
      [limit](T v, T) { return v < limit ? T(1) : T(0); });
}

template <typename T>
Tensor<T> mul_mask(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& mask) {
  if (mask.requires_grad()) throw ContractError("mul_mask: mask must be a constant tensor");
  expect_rank(mask.shape(), 2, "mul_mask", "mask");
  const std::size_t plane = mask.numel();
  std::size_t channels = 1;
  if (x.rank() == 3 && x.dim(1) == mask.dim(0) && x.dim(2) == mask.dim(1)) {
    channels = x.dim(0);
  } else if (x.shape() != mask.shape()) {
    throw ShapeError("mul_mask: input " + shape_string(x.shape()) + " does not match mask " +
                     shape_string(mask.shape()));
  }
  const auto mv = mask.data();
  for (T m : mv) {
    if (m != T(0) && m != T(1)) throw DomainError("mul_mask: mask values must be 0 or 1");
  }
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = xv[c * plane + i] * mv[i];
  Tensor<T> result(x.shape(), std::move(out), x.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([x, mask, result, channels, plane]() mutable {
    const auto g = result.grad();
    const auto mv = mask.data();
    auto gx = x.mutable_grad();
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < plane; ++i) gx[c * plane + i] += g[c * plane + i] * mv[i];
  });
  return result;
}

template <typename T>
Tensor<T> reduce_sum(Tape<T>& tape, const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  Tensor<T> result = Tensor<T>::scalar(s, x.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([x, result]() mutable {
    const T g = result.grad()[0];
    for (T& gx : x.mutable_grad()) gx += g;
  });
  return result;
}

template <typename T>
Tensor<T> reduce_mean(Tape<T>& tape, const Tensor<T>& x) {
  if (x.numel() == 0) throw DomainError("reduce_mean of an empty tensor");
  T s = 0;
  for (T v : x.data()) s += v;
  const T n = static_cast<T>(x.numel());
  Tensor<T> result = Tensor<T>::scalar(s / n, x.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([x, result, n]() mutable {
    const T g = result.grad()[0] / n;
    for (T& gx : x.mutable_grad()) gx += g;
  });
  return result;
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      tape, a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      tape, a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      tape, a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> div(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  for (T v : b.data()) {
    if (v == T(0)) throw NumericError("div: division by zero");
  }
  return binary(
      tape, a, b, "div", [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Tensor<T> abs(Tape<T>& tape, const Tensor<T>& x) {
  return unary(
      tape, x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(Tape<T>& tape, const Tensor<T>& x) {
  return unary(
      tape, x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

#define WDSM_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> conv2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> conv1x1(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> maxpool2(Tape<T>&, const Tensor<T>&);                                        \
  template Tensor<T> upsample2(Tape<T>&, const Tensor<T>&);                                       \
  template Tensor<T> concat_channels(Tape<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> select_channel(Tape<T>&, const Tensor<T>&, std::size_t);                     \
  template Tensor<T> global_avg_pool(Tape<T>&, const Tensor<T>&);                                 \
  template Tensor<T> linear(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> relu(Tape<T>&, const Tensor<T>&);                                            \
  template Tensor<T> sigmoid(Tape<T>&, const Tensor<T>&);                                         \
  template Tensor<T> softmax_channels(Tape<T>&, const Tensor<T>&);                                \
  template Tensor<T> clamp_max(Tape<T>&, const Tensor<T>&, T);                                    \
  template Tensor<T> mul_mask(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> reduce_sum(Tape<T>&, const Tensor<T>&);                                      \
  template Tensor<T> reduce_mean(Tape<T>&, const Tensor<T>&);                                     \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> sub(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> div(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> abs(Tape<T>&, const Tensor<T>&);                                             \
  template Tensor<T> square(Tape<T>&, const Tensor<T>&);

WDSM_INSTANTIATE_OPS(float)
WDSM_INSTANTIATE_OPS(double)

#undef WDSM_INSTANTIATE_OPS

}  // namespace wdsm::ops
