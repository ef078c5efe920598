#pragma once

#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "wdsm/image.hpp"
#include "wdsm/tensor.hpp"

namespace wdsm {

enum class UNetHead { relu, softmax };

struct UNetConfig {
  int depth = 2;          // pool/upsample levels
  int base_channels = 8;  // doubles per level
  UNetHead head = UNetHead::relu;

  bool operator==(const UNetConfig&) const = default;
};

struct VGGConfig {
  int blocks = 3;  // conv-conv-pool each
  int base_channels = 8;

  bool operator==(const VGGConfig&) const = default;
};

enum class ModelKind { unet_relu, unet_softmax, vgg_baseline };

std::string to_string(ModelKind kind);
// Throws DomainError listing the valid names.
ModelKind parse_model_kind(const std::string& name);
const std::vector<std::string>& model_kind_names();

struct ModelConfig {
  ModelKind kind = ModelKind::unet_relu;
  UNetConfig unet;
  VGGConfig vgg;

  static ModelConfig defaults(ModelKind kind);
  bool is_unet() const { return kind != ModelKind::vgg_baseline; }
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> value;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;  // 0 marks a bias
};

std::vector<ParamSpec> param_layout(const UNetConfig& config);
std::vector<ParamSpec> param_layout(const VGGConfig& config);
std::vector<ParamSpec> param_layout(const ModelConfig& config);

// Kernels ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases zero. The draw
// sequence is independent of T, so float and double initialisations agree up
// to rounding.
template <typename T>
ParamList<T> init_params(const ModelConfig& config, std::uint64_t seed);

// Throws FormatError unless params match the layout by name, order and shape.
template <typename T>
void check_params(const ModelConfig& config, const ParamList<T>& params);

// Segmentation output; both maps are already multiplied by the breast mask.
template <typename T>
struct MaskPair {
  Tensor<T> dense;  // [H,W]
  Tensor<T> fat;    // [H,W]
};

// image: [1,H,W]; breast_mask: constant binary [H,W]. H and W must be
// divisible by 2^depth.
template <typename T>
MaskPair<T> unet_forward(const UNetConfig& config, const ParamList<T>& params, Tape<T>& tape,
                         const Tensor<T>& image, const Tensor<T>& breast_mask);

template <typename T>
struct VggOutput {
  Tensor<T> pd;               // shape [1], in (0,1)
  Tensor<T> last_activation;  // post-ReLU output of the last conv layer
};

template <typename T>
VggOutput<T> vgg_forward(const VGGConfig& config, const ParamList<T>& params, Tape<T>& tape,
                         const Tensor<T>& image);

// Grad-CAM over the last conv layer: relu(mean_c(mean_xy(dy/dA_c) * A_c)),
// nearest-upsampled to the input size and min-max normalised. A constant map
// becomes all zeros.
template <typename T>
Image attention_map(const VGGConfig& config, const ParamList<T>& params, const Image& image);

template <typename T>
Tensor<T> image_tensor(const Image& image);  // [1,H,W]
template <typename T>
Tensor<T> mask_tensor(const Image& mask);  // [H,W]
template <typename T>
Image to_image(const Tensor<T>& plane);  // [H,W] -> Image

}  // namespace wdsm
