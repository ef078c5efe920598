#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "test_support.hpp"
#include "wdsm/checkpoint.hpp"
#include "wdsm/dataset.hpp"
#include "wdsm/pgm.hpp"

namespace wdsm {
namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { dir_ = new test::TempDir("cli"); }
  static void TearDownTestSuite() { delete dir_; }

  static CliResult run(const std::string& args) {
    const auto log = dir_->path() / "last_output.txt";
    const std::string cmd = std::string(WDSM_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
  }

  static std::string path(const std::string& name) { return (dir_->path() / name).string(); }

  // 12/12 stratified 32x32 set, generated once.
  static std::string dataset() {
    static const std::string manifest = [] {
      const auto r = run("gen --out " + path("data") + " --seed 3 --train 12 --test 12 --size 32 --stratified");
      EXPECT_EQ(r.code, 0) << r.out;
      return path("data") + "/manifest.json";
    }();
    return manifest;
  }

  static std::string trained(const std::string& model) {
    const auto ckpt = path(model + ".ckpt");
    if (!std::filesystem::exists(ckpt)) {
      const auto r = run("train --manifest " + dataset() + " --model " + model + " --epochs 2 --seed 1 --out " + ckpt);
      EXPECT_EQ(r.code, 0) << r.out;
    }
    return ckpt;
  }

  static test::TempDir* dir_;
};

test::TempDir* Cli::dir_ = nullptr;

bool has(const std::string& text, const std::string& needle) { return text.find(needle) != std::string::npos; }

TEST_F(Cli, GenPrintsBalancedHistogram) {
  const auto r = run("gen --out " + path("g1") + " --seed 9 --train 12 --test 12 --size 32 --stratified");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(has(r.out, "manifest.json"));
  EXPECT_TRUE(has(r.out, "train: 1 1 1 1 1 1 1 1 1 1 1 1"));
  EXPECT_TRUE(has(r.out, "test:  1 1 1 1 1 1 1 1 1 1 1 1"));
}

TEST_F(Cli, GenIsDeterministic) {
  ASSERT_EQ(run("gen --out " + path("g2") + " --seed 4 --train 5 --test 3 --size 32").code, 0);
  ASSERT_EQ(run("gen --out " + path("g3") + " --seed 4 --train 5 --test 3 --size 32").code, 0);
  EXPECT_EQ(fnv1a64(path("g2") + "/manifest.json"), fnv1a64(path("g3") + "/manifest.json"));
}

TEST_F(Cli, GenRejectsBadSize) {
  const auto r = run("gen --out " + path("g4") + " --seed 1 --train 1 --test 1 --size 33");
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(has(r.out, "size must be a power of two ≥ 32")) << r.out;
}

TEST_F(Cli, GenReportsIoFailure) {
  std::ofstream(path("blocker")) << "x";
  const auto r = run("gen --out " + path("blocker") + "/sub --seed 1 --train 1 --test 1 --size 32");
  EXPECT_EQ(r.code, 2) << r.out;
}

TEST_F(Cli, TrainWritesLogWithOneRowPerEpoch) {
  const auto ckpt = path("five.ckpt");
  const auto r = run("train --manifest " + dataset() + " --model unet_relu --epochs 5 --seed 2 --out " + ckpt);
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream log(ckpt + ".log.csv");
  std::string line;
  int rows = -1;
  while (std::getline(log, line)) ++rows;
  EXPECT_EQ(rows, 5);
  EXPECT_NO_THROW(load_checkpoint(ckpt));
}

TEST_F(Cli, TrainUsageErrors) {
  const auto bogus = run("train --manifest " + dataset() + " --model bogus --epochs 1 --out " + path("x.ckpt"));
  EXPECT_EQ(bogus.code, 1);
  for (const char* name : {"unet_relu", "unet_softmax", "vgg_baseline"}) EXPECT_TRUE(has(bogus.out, name)) << bogus.out;
  const auto missing = run("train --model unet_relu --epochs 1 --out " + path("x.ckpt"));
  EXPECT_EQ(missing.code, 1);
  EXPECT_TRUE(has(missing.out, "--manifest")) << missing.out;
  EXPECT_EQ(run("train --manifest " + dataset() + " --model unet_relu --out " + path("x.ckpt") + " --epochs 0").code, 1);
  EXPECT_EQ(run("train --manifest " + dataset() + " --model unet_relu --out " + path("x.ckpt") + " --frobnicate").code, 1);
  EXPECT_EQ(run("train --manifest " + path("nope.json") + " --model unet_relu --out " + path("x.ckpt")).code, 2);
}

TEST_F(Cli, EvalWritesReports) {
  const auto ckpt = trained("unet_relu");
  const auto r = run("eval --manifest " + dataset() + " --split test --ckpt " + ckpt + " --out " + path("r.json") +
                     " --csv " + path("r.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream json_in(path("r.json"));
  const auto j = nlohmann::json::parse(json_in);
  EXPECT_TRUE(j.contains("segmentation"));
  EXPECT_EQ(j["n"], 12);
  std::ifstream csv(path("r.csv"));
  std::string header;
  std::getline(csv, header);
  header.erase(std::remove(header.begin(), header.end(), ' '), header.end());
  EXPECT_EQ(header, "model,split,n,accuracy,precision,recall,f1_score,cohen_kappa,mae_pct,mxae_pct,c_index,dice_mean");
}

TEST_F(Cli, EvalMissingCheckpoint) {
  EXPECT_EQ(run("eval --manifest " + dataset() + " --ckpt " + path("none.ckpt") + " --out " + path("r2.json")).code, 2);
  EXPECT_EQ(run("eval --manifest " + dataset() + " --split dev --ckpt x --out y").code, 1);
}

TEST_F(Cli, PredictMaskAndDensityAgree) {
  const auto ckpt = trained("unet_relu");
  const auto m = read_manifest(dataset());
  const auto& rec = m.samples[3];
  const auto out_mask = path("pred_mask.pgm");
  const auto r = run("predict --ckpt " + ckpt + " --image " + m.resolve(rec.image).string() + " --breast " +
                     m.resolve(rec.breast).string() + " --out-mask " + out_mask);
  ASSERT_EQ(r.code, 0) << r.out;
  const auto pos = r.out.find("pd_hat ");
  ASSERT_NE(pos, std::string::npos);
  const double printed = std::stod(r.out.substr(pos + 7));
  EXPECT_TRUE(has(r.out, "class12 "));
  EXPECT_TRUE(has(r.out, "class4 "));

  const auto mask = pgm::read(out_mask);
  const auto breast = pgm::read(m.resolve(rec.breast));
  double sum = 0, area = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (breast.pixels[i] == 0.0f) {
      EXPECT_EQ(mask.pixels[i], 0.0f);
    }
    sum += mask.pixels[i] * breast.pixels[i];
    area += breast.pixels[i];
  }
  EXPECT_LE(std::abs(sum / area - printed), 1.0 / 255.0);
}

TEST_F(Cli, PredictEmptyBreast) {
  const auto ckpt = trained("unet_relu");
  const auto m = read_manifest(dataset());
  pgm::write(Image(32, 32, 0.0f), path("empty.pgm"));
  const auto r = run("predict --ckpt " + ckpt + " --image " + m.resolve(m.samples[0].image).string() + " --breast " +
                     path("empty.pgm") + " --out-mask " + path("o.pgm"));
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(has(r.out, "empty breast mask")) << r.out;
}

TEST_F(Cli, PredictAttentionForVgg) {
  const auto m = read_manifest(dataset());
  const auto args = " --image " + m.resolve(m.samples[0].image).string() + " --breast " +
                    m.resolve(m.samples[0].breast).string() + " --out-mask " + path("v.pgm") + " --out-attn " +
                    path("attn.pgm");
  const auto r = run("predict --ckpt " + trained("vgg_baseline") + args);
  ASSERT_EQ(r.code, 0) << r.out;
  const auto attn = pgm::read(path("attn.pgm"));
  EXPECT_EQ(attn.height, 32u);
  EXPECT_EQ(run("predict --ckpt " + trained("unet_relu") + args).code, 2);
}

TEST_F(Cli, GradcheckTable) {
  const auto all = run("gradcheck --seed 0");
  EXPECT_EQ(all.code, 0) << all.out;
  EXPECT_FALSE(has(all.out, "FAIL"));
  EXPECT_TRUE(has(all.out, "unet_weak_loss"));
  const auto one = run("gradcheck --seed 0 --ops conv2d");
  EXPECT_EQ(one.code, 0);
  EXPECT_TRUE(has(one.out, "conv2d"));
  EXPECT_FALSE(has(one.out, "maxpool2"));
  EXPECT_EQ(std::count(one.out.begin(), one.out.end(), '\n'), 2);
  EXPECT_EQ(run("gradcheck --ops conv9d").code, 1);
}

TEST_F(Cli, HelpEverywhere) {
  const std::vector<std::pair<std::string, std::vector<std::string>>> flags = {
      {"gen", {"--out", "--seed", "--train", "--test", "--size", "--stratified"}},
      {"train", {"--manifest", "--model", "--epochs", "--seed", "--out", "--lambda-bin", "--density-term", "--lr", "--batch"}},
      {"eval", {"--manifest", "--split", "--ckpt", "--out", "--csv"}},
      {"predict", {"--ckpt", "--image", "--breast", "--out-mask", "--out-attn"}},
      {"gradcheck", {"--seed", "--ops"}},
  };
  for (const auto& [sub, names] : flags) {
    const auto r = run(sub + " --help");
    EXPECT_EQ(r.code, 0) << sub;
    for (const auto& f : names) EXPECT_TRUE(has(r.out, f)) << sub << " " << f;
  }
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frob").code, 1);
}

}  // namespace
}  // namespace wdsm
