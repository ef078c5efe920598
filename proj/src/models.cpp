#include "wdsm/models.hpp"

#include <algorithm>
#include <cmath>

#include "wdsm/errors.hpp"
#include "wdsm/ops.hpp"
#include "wdsm/rng.hpp"

namespace wdsm {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::unet_relu:
      return "unet_relu";
    case ModelKind::unet_softmax:
      return "unet_softmax";
    case ModelKind::vgg_baseline:
      return "vgg_baseline";
  }
  return "?";
}

const std::vector<std::string>& model_kind_names() {
  static const std::vector<std::string> names = {"unet_relu", "unet_softmax", "vgg_baseline"};
  return names;
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "unet_relu") return ModelKind::unet_relu;
  if (name == "unet_softmax") return ModelKind::unet_softmax;
  if (name == "vgg_baseline") return ModelKind::vgg_baseline;
  throw DomainError("unknown model '" + name + "'; valid names: unet_relu, unet_softmax, vgg_baseline");
}

ModelConfig ModelConfig::defaults(ModelKind kind) {
  ModelConfig c;
  c.kind = kind;
  c.unet.head = kind == ModelKind::unet_softmax ? UNetHead::softmax : UNetHead::relu;
  return c;
}

nlohmann::json to_json(const ModelConfig& config) {
  if (config.is_unet()) {
    return {{"model", to_string(config.kind)},
            {"depth", config.unet.depth},
            {"base_channels", config.unet.base_channels}};
  }
  return {{"model", to_string(config.kind)}, {"blocks", config.vgg.blocks},
          {"base_channels", config.vgg.base_channels}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c = ModelConfig::defaults(parse_model_kind(j.at("model").get<std::string>()));
    if (c.is_unet()) {
      c.unet.depth = j.at("depth").get<int>();
      c.unet.base_channels = j.at("base_channels").get<int>();
    } else {
      c.vgg.blocks = j.at("blocks").get<int>();
      c.vgg.base_channels = j.at("base_channels").get<int>();
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model config: ") + e.what());
  } catch (const DomainError& e) {
    throw FormatError(std::string("bad model config: ") + e.what());
  }
}

namespace {

void add_conv(std::vector<ParamSpec>& out, const std::string& name, std::size_t c_in, std::size_t c_out) {
  out.push_back({name + ".weight", {c_out, c_in, 3, 3}, c_in * 9});
  out.push_back({name + ".bias", {c_out}, 0});
}

std::size_t channels_at(int base, int level) { return static_cast<std::size_t>(base) << level; }

// Walks a ParamList in layout order.
template <typename T>
class ParamCursor {
 public:
  explicit ParamCursor(const ParamList<T>& params) : params_(params) {}
  const Tensor<T>& next() {
    if (pos_ >= params_.size()) throw FormatError("parameter list is shorter than the model layout");
    return params_[pos_++].value;
  }

 private:
  const ParamList<T>& params_;
  std::size_t pos_ = 0;
};

template <typename T>
Tensor<T> conv_relu(Tape<T>& tape, const Tensor<T>& x, ParamCursor<T>& p) {
  const auto& w = p.next();
  const auto& b = p.next();
  return ops::relu(tape, ops::conv2d(tape, x, w, b));
}

void check_config(const UNetConfig& c) {
  if (c.depth < 1 || c.base_channels < 1) throw DomainError("U-Net depth and base_channels must be >= 1");
}

void check_config(const VGGConfig& c) {
  if (c.blocks < 1 || c.base_channels < 1) throw DomainError("VGG blocks and base_channels must be >= 1");
}

}  // namespace

std::vector<ParamSpec> param_layout(const UNetConfig& config) {
  check_config(config);
  std::vector<ParamSpec> out;
  const int b = config.base_channels;
  for (int l = 0; l < config.depth; ++l) {
    const std::size_t in = l == 0 ? 1 : channels_at(b, l - 1);
    const std::string name = "enc" + std::to_string(l);
    add_conv(out, name + ".conv1", in, channels_at(b, l));
    add_conv(out, name + ".conv2", channels_at(b, l), channels_at(b, l));
  }
  add_conv(out, "mid.conv1", channels_at(b, config.depth - 1), channels_at(b, config.depth));
  add_conv(out, "mid.conv2", channels_at(b, config.depth), channels_at(b, config.depth));
  for (int l = config.depth - 1; l >= 0; --l) {
    const std::string name = "dec" + std::to_string(l);
    add_conv(out, name + ".conv1", channels_at(b, l + 1) + channels_at(b, l), channels_at(b, l));
    add_conv(out, name + ".conv2", channels_at(b, l), channels_at(b, l));
  }
  const auto c0 = channels_at(b, 0);
  out.push_back({"head.weight", {2, c0}, c0});
  out.push_back({"head.bias", {2}, 0});
  return out;
}

std::vector<ParamSpec> param_layout(const VGGConfig& config) {
  check_config(config);
  std::vector<ParamSpec> out;
  const int b = config.base_channels;
  for (int l = 0; l < config.blocks; ++l) {
    const std::size_t in = l == 0 ? 1 : channels_at(b, l - 1);
    const std::string name = "block" + std::to_string(l);
    add_conv(out, name + ".conv1", in, channels_at(b, l));
    add_conv(out, name + ".conv2", channels_at(b, l), channels_at(b, l));
  }
  const auto last = channels_at(b, config.blocks - 1);
  out.push_back({"fc.weight", {1, last}, last});
  out.push_back({"fc.bias", {1}, 0});
  return out;
}

std::vector<ParamSpec> param_layout(const ModelConfig& config) {
  return config.is_unet() ? param_layout(config.unet) : param_layout(config.vgg);
}

template <typename T>
ParamList<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  ParamList<T> out;
  for (const auto& spec : param_layout(config)) {
    std::vector<T> values(shape_numel(spec.shape), T(0));
    if (spec.fan_in > 0) {
      const double bound = std::sqrt(6.0 / static_cast<double>(spec.fan_in));
      for (auto& v : values) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    out.push_back({spec.name, Tensor<T>(spec.shape, std::move(values), true)});
  }
  return out;
}

template <typename T>
void check_params(const ModelConfig& config, const ParamList<T>& params) {
  const auto layout = param_layout(config);
  if (layout.size() != params.size()) {
    throw FormatError("model " + to_string(config.kind) + " expects " + std::to_string(layout.size()) +
                      " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].name != params[i].name || layout[i].shape != params[i].value.shape()) {
      throw FormatError("tensor " + std::to_string(i) + ": expected " + layout[i].name +
                        shape_string(layout[i].shape) + ", got " + params[i].name +
                        shape_string(params[i].value.shape()));
    }
  }
}

template <typename T>
MaskPair<T> unet_forward(const UNetConfig& config, const ParamList<T>& params, Tape<T>& tape,
                         const Tensor<T>& image, const Tensor<T>& breast_mask) {
  check_config(config);
  if (image.rank() != 3 || image.dim(0) != 1) {
    throw ShapeError("unet_forward: image must be [1,H,W], got " + shape_string(image.shape()));
  }
  const std::size_t factor = std::size_t{1} << config.depth;
  if (image.dim(1) % factor != 0 || image.dim(2) % factor != 0) {
    throw ShapeError("unet_forward: size " + shape_string(image.shape()) + " not divisible by 2^" +
                     std::to_string(config.depth));
  }
  ParamCursor<T> p(params);
  Tensor<T> x = image;
  std::vector<Tensor<T>> skips;
  for (int l = 0; l < config.depth; ++l) {
    x = conv_relu(tape, x, p);
    x = conv_relu(tape, x, p);
    skips.push_back(x);
    x = ops::maxpool2(tape, x);
  }
  x = conv_relu(tape, x, p);
  x = conv_relu(tape, x, p);
  for (int l = config.depth - 1; l >= 0; --l) {
    x = ops::upsample2(tape, x);
    x = ops::concat_channels(tape, x, skips[static_cast<std::size_t>(l)]);
    x = conv_relu(tape, x, p);
    x = conv_relu(tape, x, p);
  }
  const auto& hw = p.next();
  const auto& hb = p.next();
  Tensor<T> logits = ops::conv1x1(tape, x, hw, hb);
  Tensor<T> act = config.head == UNetHead::relu ? ops::clamp_max(tape, ops::relu(tape, logits), T(1))
                                                : ops::softmax_channels(tape, logits);
  Tensor<T> masked = ops::mul_mask(tape, act, breast_mask);
  return {ops::select_channel(tape, masked, 0), ops::select_channel(tape, masked, 1)};
}

template <typename T>
VggOutput<T> vgg_forward(const VGGConfig& config, const ParamList<T>& params, Tape<T>& tape,
                         const Tensor<T>& image) {
  check_config(config);
  if (image.rank() != 3 || image.dim(0) != 1) {
    throw ShapeError("vgg_forward: image must be [1,H,W], got " + shape_string(image.shape()));
  }
  const std::size_t factor = std::size_t{1} << config.blocks;
  if (image.dim(1) % factor != 0 || image.dim(2) % factor != 0) {
    throw ShapeError("vgg_forward: size " + shape_string(image.shape()) + " not divisible by 2^" +
                     std::to_string(config.blocks));
  }
  ParamCursor<T> p(params);
  Tensor<T> x = image;
  Tensor<T> last;
  for (int l = 0; l < config.blocks; ++l) {
    x = conv_relu(tape, x, p);
    x = conv_relu(tape, x, p);
    last = x;
    x = ops::maxpool2(tape, x);
  }
  const auto& fw = p.next();
  const auto& fb = p.next();
  Tensor<T> pooled = ops::global_avg_pool(tape, x);
  Tensor<T> pd = ops::sigmoid(tape, ops::linear(tape, pooled, fw, fb));
  return {pd, last};
}

template <typename T>
Image attention_map(const VGGConfig& config, const ParamList<T>& params, const Image& image) {
  // Constant copies of the parameters; the image is marked differentiable so
  // the activations are recorded without touching caller gradients.
  ParamList<T> frozen;
  for (const auto& np : params) frozen.push_back({np.name, np.value.clone(false)});
  Tensor<T> input = image_tensor<T>(image).clone(true);
  Tape<T> tape;
  auto out = vgg_forward(config, frozen, tape, input);
  tape.backward(out.pd);

  const auto& act = out.last_activation;
  const std::size_t c = act.dim(0), ah = act.dim(1), aw = act.dim(2), plane = ah * aw;
  const auto a = act.data();
  const auto g = act.grad();
  std::vector<double> cam(plane, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double alpha = 0.0;
    for (std::size_t i = 0; i < plane; ++i) alpha += static_cast<double>(g[ch * plane + i]);
    alpha /= static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) cam[i] += alpha * static_cast<double>(a[ch * plane + i]);
  }
  for (auto& v : cam) v = std::max(0.0, v / static_cast<double>(c));

  const auto [lo_it, hi_it] = std::minmax_element(cam.begin(), cam.end());
  const double lo = *lo_it, hi = *hi_it;
  Image map(image.height, image.width, 0.0f);
  if (hi == lo) return map;
  const std::size_t sy = image.height / ah, sx = image.width / aw;
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      map.at(y, x) = static_cast<float>((cam[(y / sy) * aw + x / sx] - lo) / (hi - lo));
    }
  }
  return map;
}

template <typename T>
Tensor<T> image_tensor(const Image& image) {
  return Tensor<T>({1, image.height, image.width}, std::vector<T>(image.pixels.begin(), image.pixels.end()));
}

template <typename T>
Tensor<T> mask_tensor(const Image& mask) {
  return Tensor<T>({mask.height, mask.width}, std::vector<T>(mask.pixels.begin(), mask.pixels.end()));
}

template <typename T>
Image to_image(const Tensor<T>& plane) {
  if (plane.rank() != 2) throw ShapeError("to_image expects [H,W], got " + shape_string(plane.shape()));
  Image img(plane.dim(0), plane.dim(1));
  const auto v = plane.data();
  for (std::size_t i = 0; i < v.size(); ++i) img.pixels[i] = static_cast<float>(v[i]);
  return img;
}

#define WDSM_INSTANTIATE_MODELS(T)                                                                      \
  template ParamList<T> init_params<T>(const ModelConfig&, std::uint64_t);                              \
  template void check_params<T>(const ModelConfig&, const ParamList<T>&);                               \
  template MaskPair<T> unet_forward<T>(const UNetConfig&, const ParamList<T>&, Tape<T>&, const Tensor<T>&, \
                                       const Tensor<T>&);                                               \
  template VggOutput<T> vgg_forward<T>(const VGGConfig&, const ParamList<T>&, Tape<T>&, const Tensor<T>&); \
  template Image attention_map<T>(const VGGConfig&, const ParamList<T>&, const Image&);                 \
  template Tensor<T> image_tensor<T>(const Image&);                                                     \
  template Tensor<T> mask_tensor<T>(const Image&);                                                      \
  template Image to_image<T>(const Tensor<T>&);

WDSM_INSTANTIATE_MODELS(float)
WDSM_INSTANTIATE_MODELS(double)

#undef WDSM_INSTANTIATE_MODELS

}  // namespace wdsm
