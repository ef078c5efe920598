#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "test_support.hpp"
#include "wdsm/errors.hpp"
#include "wdsm/models.hpp"
#include "wdsm/ops.hpp"
#include "wdsm/rng.hpp"

namespace wdsm {
namespace {

using test::values;

template <typename T>
ParamList<T> zero_params(const ModelConfig& cfg) {
  ParamList<T> out;
  for (const auto& s : param_layout(cfg)) out.push_back({s.name, Tensor<T>::zeros(s.shape, true)});
  return out;
}

Image random_image(Rng& rng, std::size_t n) {
  Image img(n, n);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  return img;
}

Image random_mask(Rng& rng, std::size_t n) {
  Image m(n, n);
  for (auto& p : m.pixels) p = rng.below(3) ? 1.0f : 0.0f;
  return m;
}

const ModelConfig relu = ModelConfig::defaults(ModelKind::unet_relu);
const ModelConfig softmax = ModelConfig::defaults(ModelKind::unet_softmax);
const ModelConfig vgg = ModelConfig::defaults(ModelKind::vgg_baseline);

TEST(ModelKind, NamesRoundTrip) {
  for (const auto& name : model_kind_names()) EXPECT_EQ(to_string(parse_model_kind(name)), name);
  try {
    parse_model_kind("bogus");
    FAIL();
  } catch (const DomainError& e) {
    for (const auto& name : model_kind_names()) EXPECT_NE(std::string(e.what()).find(name), std::string::npos);
  }
}

TEST(ModelConfig, JsonRoundTrip) {
  for (auto cfg : {relu, softmax, vgg}) {
    if (cfg.is_unet()) {
      cfg.unet.base_channels = 6;
    } else {
      cfg.vgg.base_channels = 6;
    }
    EXPECT_EQ(model_config_from_json(to_json(cfg)), cfg);
  }
  EXPECT_THROW(model_config_from_json(nlohmann::json{{"kind", "unet_relu"}}), FormatError);
}

TEST(UNet, ZeroParamsSoftmaxIsOneHalf) {
  Tape<float> tape;
  const auto m = unet_forward(softmax.unet, zero_params<float>(softmax), tape, Tensor<float>::full({1, 16, 16}, 0.3f),
                              Tensor<float>::full({16, 16}, 1.0f));
  EXPECT_EQ(values(m.dense), std::vector<float>(256, 0.5f));
  EXPECT_EQ(values(m.fat), std::vector<float>(256, 0.5f));
}

TEST(UNet, ZeroParamsReluIsZero) {
  Tape<float> tape;
  const auto m = unet_forward(relu.unet, zero_params<float>(relu), tape, Tensor<float>::full({1, 16, 16}, 0.3f),
                              Tensor<float>::full({16, 16}, 1.0f));
  EXPECT_EQ(values(m.dense), std::vector<float>(256, 0.0f));
}

TEST(UNet, EmptyBreastGivesZeroMasks) {
  Rng rng(1);
  for (const auto& cfg : {relu, softmax}) {
    Tape<float> tape;
    const auto m = unet_forward(cfg.unet, init_params<float>(cfg, 3), tape,
                                image_tensor<float>(random_image(rng, 16)), Tensor<float>::zeros({16, 16}));
    EXPECT_EQ(values(m.dense), std::vector<float>(256, 0.0f));
    EXPECT_EQ(values(m.fat), std::vector<float>(256, 0.0f));
  }
}

TEST(UNet, BreastConstraintAndRanges) {
  Rng rng(2);
  for (int trial = 0; trial < 6; ++trial) {
    const auto& cfg = trial % 2 ? softmax : relu;
    const std::size_t n = trial < 3 ? 16 : 32;
    const auto params = init_params<double>(cfg, rng.next());
    const auto mask = random_mask(rng, n);
    const auto image = image_tensor<double>(random_image(rng, n)).clone(true);
    Tape<double> tape;
    const auto m = unet_forward(cfg.unet, params, tape, image, mask_tensor<double>(mask));
    ASSERT_EQ(m.dense.shape(), (Shape{n, n}));
    ASSERT_EQ(m.fat.shape(), (Shape{n, n}));
    for (std::size_t i = 0; i < n * n; ++i) {
      const double d = m.dense.data()[i], f = m.fat.data()[i];
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, 1.0);
      EXPECT_GE(f, 0.0);
      EXPECT_LE(f, 1.0);
      if (mask.pixels[i] == 0.0f) {
        EXPECT_EQ(d, 0.0);
        EXPECT_EQ(f, 0.0);
      } else if (cfg.unet.head == UNetHead::softmax) {
        EXPECT_NEAR(d + f, 1.0, 1e-6);
      }
    }
  }
}

TEST(UNet, RejectsIndivisibleSize) {
  Tape<float> tape;
  EXPECT_THROW(unet_forward(relu.unet, init_params<float>(relu, 1), tape, Tensor<float>::zeros({1, 18, 18}),
                            Tensor<float>::zeros({18, 18})),
               ShapeError);
}

TEST(Vgg, ZeroParamsPredictOneHalf) {
  Tape<float> tape;
  const auto out = vgg_forward(vgg.vgg, zero_params<float>(vgg), tape, Tensor<float>::full({1, 32, 32}, 0.4f));
  EXPECT_EQ(out.pd.item(), 0.5f);
}

TEST(Vgg, OutputInOpenIntervalAndDeterministic) {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto params = init_params<float>(vgg, rng.next());
    const auto img = image_tensor<float>(random_image(rng, 32));
    Tape<float> t1, t2;
    const float a = vgg_forward(vgg.vgg, params, t1, img).pd.item();
    const float b = vgg_forward(vgg.vgg, params, t2, img).pd.item();
    EXPECT_GT(a, 0.0f);
    EXPECT_LT(a, 1.0f);
    EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
  }
}

TEST(AttentionMap, ConstantCaseIsAllZero) {
  const auto map = attention_map(vgg.vgg, zero_params<float>(vgg), Image(32, 32, 0.5f));
  EXPECT_EQ(map.height, 32u);
  EXPECT_EQ(map.pixels, std::vector<float>(32 * 32, 0.0f));
}

TEST(AttentionMap, ShapeAndRange) {
  Rng rng(6);
  const auto params = init_params<float>(vgg, 8);
  const auto img = random_image(rng, 64);
  const auto map = attention_map(vgg.vgg, params, img);
  EXPECT_EQ(map.height, 64u);
  EXPECT_EQ(map.width, 64u);
  for (float v : map.pixels) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  // The caller's parameters collect no gradient.
  for (const auto& p : params)
    for (float g : p.value.grad()) EXPECT_EQ(g, 0.0f);
}

TEST(InitParams, DeterministicBoundedZeroBias) {
  for (const auto& cfg : {relu, softmax, vgg}) {
    const auto a = init_params<float>(cfg, 11);
    const auto b = init_params<float>(cfg, 11);
    const auto layout = param_layout(cfg);
    ASSERT_EQ(a.size(), layout.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(values(a[i].value), values(b[i].value));
      if (layout[i].fan_in == 0) {
        EXPECT_EQ(values(a[i].value), std::vector<float>(a[i].value.numel(), 0.0f)) << layout[i].name;
      } else {
        const double bound = std::sqrt(6.0 / static_cast<double>(layout[i].fan_in));
        for (float v : a[i].value.data()) EXPECT_LE(std::abs(v), bound);
      }
    }
    EXPECT_NO_THROW(check_params(cfg, a));
  }
  EXPECT_NE(values(init_params<float>(relu, 1)[0].value), values(init_params<float>(relu, 2)[0].value));
}

TEST(InitParams, FloatAndDoubleAgree) {
  const auto f = init_params<float>(relu, 5);
  const auto d = init_params<double>(relu, 5);
  for (std::size_t i = 0; i < f.size(); ++i)
    for (std::size_t k = 0; k < f[i].value.numel(); ++k)
      EXPECT_EQ(f[i].value.data()[k], static_cast<float>(d[i].value.data()[k]));
}

TEST(CheckParams, LayoutMismatchRejected) {
  auto p = init_params<float>(relu, 1);
  EXPECT_THROW(check_params(vgg, p), FormatError);
  p.pop_back();
  EXPECT_THROW(check_params(relu, p), FormatError);
}

}  // namespace
}  // namespace wdsm
