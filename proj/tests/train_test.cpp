#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "test_support.hpp"
#include "wdsm/adam.hpp"
#include "wdsm/dataset.hpp"
#include "wdsm/errors.hpp"
#include "wdsm/evaluate.hpp"
#include "wdsm/pgm.hpp"
#include "wdsm/trainer.hpp"

namespace wdsm {
namespace {

TEST(Adam, FirstStepClosedForm) {
  std::vector<double> theta = {1.0}, g = {1.0}, m = {0.0}, v = {0.0};
  adam_step<double>(theta, g, m, v, AdamConfig{}, 1);
  const double want = 1.0 - 1e-3 * (1.0 / (std::sqrt(1.0) + 1e-8));
  EXPECT_LE(std::abs(theta[0] - want), 1e-12 * std::abs(want));
  EXPECT_NEAR(theta[0], 0.999, 1e-8);
}

TEST(Adam, MatchesRecursionOverManySteps) {
  const AdamConfig cfg{0.01, 0.8, 0.95, 1e-6};
  std::vector<double> theta = {0.3, -1.2}, m = {0, 0}, v = {0, 0};
  double th[2] = {0.3, -1.2}, mm[2] = {0, 0}, vv[2] = {0, 0};
  for (int t = 1; t <= 25; ++t) {
    const std::vector<double> g = {std::sin(t * 0.7), 0.5 - 0.03 * t};
    adam_step<double>(theta, g, m, v, cfg, t);
    for (int i = 0; i < 2; ++i) {
      mm[i] = 0.8 * mm[i] + 0.2 * g[i];
      vv[i] = 0.95 * vv[i] + 0.05 * g[i] * g[i];
      const double mhat = mm[i] / (1 - std::pow(0.8, t)), vhat = vv[i] / (1 - std::pow(0.95, t));
      th[i] -= 0.01 * mhat / (std::sqrt(vhat) + 1e-6);
      EXPECT_LE(std::abs(theta[i] - th[i]), 1e-12 * std::max(1.0, std::abs(th[i])));
    }
  }
}

TEST(Adam, ZeroLearningRateOrZeroGradientLeavesParams) {
  std::vector<float> theta = {0.1f, -0.7f, 3.0f}, m(3, 0.0f), v(3, 0.0f);
  const auto before = theta;
  const std::vector<float> g = {1.0f, -2.0f, 0.5f};
  AdamConfig frozen;
  frozen.lr = 0.0;
  adam_step<float>(theta, g, m, v, frozen, 1);
  EXPECT_EQ(theta, before);
  std::vector<float> m2(3, 0.0f), v2(3, 0.0f);
  adam_step<float>(theta, std::vector<float>(3, 0.0f), m2, v2, AdamConfig{}, 1);
  EXPECT_EQ(theta, before);
}

TEST(Adam, ArgumentChecks) {
  std::vector<double> a(2), b(3), m(2), v(2);
  EXPECT_THROW(adam_step<double>(a, a, m, v, AdamConfig{}, 0), DomainError);
  EXPECT_THROW(adam_step<double>(a, b, m, v, AdamConfig{}, 1), ShapeError);
}

class TrainFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new test::TempDir("train");
    DatasetOptions o;
    o.seed = 5;
    o.n_train = 12;
    o.n_test = 6;
    o.size = 32;
    o.stratified = true;
    manifest_ = new Manifest(generate_dataset(o, dir_->path() / "multi").manifest);
    o.n_train = 1;
    o.n_test = 1;
    o.stratified = false;
    single_ = new Manifest(generate_dataset(o, dir_->path() / "single").manifest);
  }
  static void TearDownTestSuite() {
    delete manifest_;
    delete single_;
    delete dir_;
  }

  static TrainConfig config(ModelKind kind, int epochs) {
    TrainConfig c;
    c.model = ModelConfig::defaults(kind);
    c.epochs = epochs;
    c.batch_size = 4;
    c.seed = 42;
    return c;
  }

  static test::TempDir* dir_;
  static Manifest* manifest_;
  static Manifest* single_;
};

test::TempDir* TrainFixture::dir_ = nullptr;
Manifest* TrainFixture::manifest_ = nullptr;
Manifest* TrainFixture::single_ = nullptr;

TEST_F(TrainFixture, RepeatRunsAreBitwiseIdentical) {
  for (auto kind : {ModelKind::unet_relu, ModelKind::vgg_baseline}) {
    const auto a = train(config(kind, 2), *manifest_);
    const auto b = train(config(kind, 2), *manifest_);
    EXPECT_EQ(encode_checkpoint(a.checkpoint), encode_checkpoint(b.checkpoint));
    auto c = config(kind, 2);
    c.seed = 43;
    EXPECT_NE(encode_checkpoint(train(c, *manifest_).checkpoint), encode_checkpoint(a.checkpoint));
  }
}

TEST_F(TrainFixture, RejectsBadConfig) {
  auto c = config(ModelKind::unet_relu, 0);
  EXPECT_THROW(train(c, *manifest_), DomainError);
  c.epochs = 1;
  c.batch_size = 0;
  EXPECT_THROW(train(c, *manifest_), DomainError);
}

TEST_F(TrainFixture, OneEpochReducesSingleSampleLoss) {
  for (auto kind : {ModelKind::unet_relu, ModelKind::unet_softmax, ModelKind::vgg_baseline}) {
    auto c = config(kind, 1);
    c.adam.lr = 1e-4;
    const auto samples = load_split(*single_, Split::train, false);
    const auto before = mean_training_loss(c, init_params<float>(c.model, init_seed(c.seed)), samples);
    const auto result = train(c, *single_);
    const auto after = mean_training_loss(c, params_from_checkpoint<float>(result.checkpoint), samples);
    EXPECT_LT(after, before) << to_string(kind);
  }
}

TEST_F(TrainFixture, MemorisesASingleSample) {
  auto c = config(ModelKind::unet_relu, 300);
  c.batch_size = 1;
  c.exact_pd = true;
  const auto result = train(c, *single_);
  const auto report = evaluate(result.checkpoint, *single_, Split::train);
  EXPECT_LT(report.regression.mae, 1.0);
}

TEST_F(TrainFixture, LogHasOneRowPerEpoch) {
  auto c = config(ModelKind::unet_softmax, 3);
  c.validate = true;
  std::vector<int> seen;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& e) { seen.push_back(e.epoch); };
  const auto result = train(c, *manifest_, hooks);
  EXPECT_EQ(seen, (std::vector<int>{1, 2, 3}));
  ASSERT_EQ(result.log.epochs.size(), 3u);
  for (const auto& e : result.log.epochs) {
    EXPECT_TRUE(e.val_mae.has_value());
    EXPECT_NEAR(e.loss_total, e.loss_density + c.loss.lambda_bin * e.loss_bin, 1e-6);
  }
  const auto csv = result.log.to_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,loss_total,loss_density,loss_bin,val_mae,seconds");
}

TEST_F(TrainFixture, IntermediateCheckpoints) {
  auto c = config(ModelKind::vgg_baseline, 4);
  c.checkpoint_every = 2;
  std::vector<int> epochs;
  TrainHooks hooks;
  hooks.on_checkpoint = [&](int e, const Checkpoint&) { epochs.push_back(e); };
  const auto result = train(c, *manifest_, hooks);
  EXPECT_EQ(epochs, (std::vector<int>{2, 4}));
}

TEST_F(TrainFixture, NeverReadsDenseTruth) {
  std::set<std::string> read;
  Checkpoint watched;
  {
    pgm::ScopedReadObserver watch([&](const auto& p) { read.insert(p.filename().string()); });
    watched = train(config(ModelKind::unet_relu, 1), *manifest_).checkpoint;
  }
  EXPECT_FALSE(read.empty());
  for (const auto& name : read) EXPECT_EQ(name.find("_dense"), std::string::npos) << name;

  // Removing every dense file changes nothing.
  test::TempDir copy("train_nodense");
  std::filesystem::copy(manifest_->root, copy.path(), std::filesystem::copy_options::recursive);
  auto stripped = read_manifest(copy / "manifest.json");
  for (const auto& r : stripped.samples) std::filesystem::remove(stripped.resolve(*r.dense));
  const auto blind = train(config(ModelKind::unet_relu, 1), stripped).checkpoint;
  EXPECT_EQ(encode_checkpoint(blind), encode_checkpoint(watched));
}

TEST_F(TrainFixture, TrainConfigJsonRoundTrip) {
  auto c = config(ModelKind::unet_softmax, 7);
  c.loss.density_term = DensityTerm::l1;
  c.exact_pd = true;
  const auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(train_config_from_json(nlohmann::json::object()), FormatError);
}

TEST_F(TrainFixture, EvaluateReportsAllSections) {
  const auto ck = train(config(ModelKind::unet_relu, 1), *manifest_).checkpoint;
  const auto report = evaluate(ck, *manifest_, Split::test);
  EXPECT_EQ(report.samples.size(), 6u);
  ASSERT_TRUE(report.segmentation.has_value());
  EXPECT_EQ(report.segmentation->per_sample.size(), 6u);
  EXPECT_EQ(report.mask_source, "m_dense");
  const auto j = to_json(report);
  EXPECT_TRUE(j.contains("segmentation"));
  EXPECT_TRUE(j["regression"].contains("c_index"));
  EXPECT_EQ(j["classification"]["confusion"].size(), 4u);
}

TEST_F(TrainFixture, EvaluateWithoutDenseTruthHasNoDiceSection) {
  const auto ck = train(config(ModelKind::unet_relu, 1), *manifest_).checkpoint;
  Manifest m = *manifest_;
  for (auto& r : m.samples) r.dense.reset();
  const auto report = evaluate(ck, m, Split::test);
  EXPECT_FALSE(report.segmentation.has_value());
  EXPECT_FALSE(to_json(report).contains("segmentation"));
}

TEST_F(TrainFixture, VggEvaluationUsesAttentionMaps) {
  const auto ck = train(config(ModelKind::vgg_baseline, 1), *manifest_).checkpoint;
  const auto report = evaluate(ck, *manifest_, Split::test);
  EXPECT_EQ(report.mask_source, "grad_cam");
  ASSERT_TRUE(report.segmentation.has_value());
}

TEST_F(TrainFixture, SingleSampleSplitHasUndefinedCIndex) {
  const auto ck = train(config(ModelKind::unet_relu, 1), *single_).checkpoint;
  const auto report = evaluate(ck, *single_, Split::test);
  EXPECT_TRUE(std::isnan(report.regression.c_index));
  EXPECT_TRUE(to_json(report)["regression"]["c_index"].is_null());
}

TEST(EvalCsv, ColumnOrderFollowsTables) {
  EvalReport r;
  r.model = "unet_relu";
  r.regression.c_index = 0.8;
  const auto csv = to_csv({r});
  std::string header = csv.substr(0, csv.find('\n'));
  header.erase(std::remove(header.begin(), header.end(), ' '), header.end());
  EXPECT_EQ(header, "model,split,n,accuracy,precision,recall,f1_score,cohen_kappa,mae_pct,mxae_pct,c_index,dice_mean");
}

}  // namespace
}  // namespace wdsm
