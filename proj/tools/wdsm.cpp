// wdsm: dataset generation, training, evaluation, prediction and gradient
// checks from one binary. Exit codes: 0 success, 1 usage error, 2 runtime
// error.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wdsm/checkpoint.hpp"
#include "wdsm/dataset.hpp"
#include "wdsm/density_grid.hpp"
#include "wdsm/errors.hpp"
#include "wdsm/evaluate.hpp"
#include "wdsm/gradcheck_suite.hpp"
#include "wdsm/models.hpp"
#include "wdsm/pgm.hpp"
#include "wdsm/phantom.hpp"
#include "wdsm/trainer.hpp"
#include "wdsm/weak_loss.hpp"

namespace fs = std::filesystem;
using namespace wdsm;

namespace {

constexpr int exit_usage = 1;
constexpr int exit_runtime = 2;

struct GenArgs {
  fs::path out;
  std::uint64_t seed = 0;
  std::size_t n_train = 0, n_test = 0, size = 64;
  bool stratified = false;
};

struct TrainArgs {
  fs::path manifest, out, log;
  std::string model;
  int epochs = 30, batch = 8;
  std::uint64_t seed = 0;
  double lambda_bin = 0.1, lr = 1e-3;
  std::string density_term = "l2";
  bool validate = false, exact_pd = false;
};

struct EvalArgs {
  fs::path manifest, ckpt, out, csv;
  std::string split = "test";
};

struct PredictArgs {
  fs::path ckpt, image, breast, out_mask, out_attn;
};

struct GradArgs {
  std::uint64_t seed = 0;
  std::vector<std::string> ops;
};

std::string histogram_line(const std::array<std::size_t, 12>& h) {
  std::ostringstream os;
  for (std::size_t c = 0; c < h.size(); ++c) os << (c ? " " : "") << h[c];
  return os.str();
}

int run_gen(const GenArgs& a) {
  DatasetOptions opts;
  opts.seed = a.seed;
  opts.n_train = a.n_train;
  opts.n_test = a.n_test;
  opts.size = a.size;
  opts.stratified = a.stratified;
  const auto ds = generate_dataset(opts, a.out);
  std::cout << "manifest: " << ds.manifest_path.string() << "\n";
  std::cout << "class12 histogram (classes 0..11)\n";
  std::cout << "  train: " << histogram_line(ds.train_histogram) << "\n";
  std::cout << "  test:  " << histogram_line(ds.test_histogram) << "\n";
  return 0;
}

int run_train(const TrainArgs& a) {
  TrainConfig cfg;
  cfg.model = ModelConfig::defaults(parse_model_kind(a.model));
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.seed = a.seed;
  cfg.adam.lr = a.lr;
  cfg.loss.lambda_bin = a.lambda_bin;
  cfg.loss.density_term = parse_density_term(a.density_term);
  cfg.validate = a.validate;
  cfg.exact_pd = a.exact_pd;
  const auto manifest = read_manifest(a.manifest);

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& e) {
    std::fprintf(stderr, "epoch %3d/%d  loss %.6f  (density %.6f, bin %.6f)", e.epoch, cfg.epochs, e.loss_total,
                 e.loss_density, e.loss_bin);
    if (e.val_mae) std::fprintf(stderr, "  val_mae %.3f%%", *e.val_mae);
    std::fprintf(stderr, "  %.1fs\n", e.seconds);
  };
  const auto result = train(cfg, manifest, hooks);
  save_checkpoint(result.checkpoint, a.out);
  const fs::path log = a.log.empty() ? fs::path(a.out.string() + ".log.csv") : a.log;
  result.log.write_csv(log);
  std::cout << "checkpoint: " << a.out.string() << "\n";
  std::cout << "log: " << log.string() << "\n";
  return 0;
}

int run_eval(const EvalArgs& a) {
  const auto split = parse_split(a.split);
  const auto ckpt = load_checkpoint(a.ckpt);
  const auto manifest = read_manifest(a.manifest);
  const auto report = evaluate(ckpt, manifest, split);
  write_text(a.out, to_json(report).dump(2) + "\n");
  if (!a.csv.empty()) write_text(a.csv, to_csv({report}));
  std::cout << to_csv({report});
  return 0;
}

int run_predict(const PredictArgs& a) {
  const auto ckpt = load_checkpoint(a.ckpt);
  const auto params = params_from_checkpoint<float>(ckpt);
  const auto image = pgm::read(a.image);
  auto breast = pgm::read(a.breast);
  if (breast.height != image.height || breast.width != image.width) {
    throw ShapeError("image and breast mask sizes differ");
  }
  for (auto& v : breast.pixels) v = v >= 0.5f ? 1.0f : 0.0f;

  double pd_hat = 0.0;
  Image mask;
  if (ckpt.model.is_unet()) {
    if (!a.out_attn.empty()) throw DomainError("--out-attn needs a vgg_baseline checkpoint");
    Tape<float> tape;
    const auto breast_t = mask_tensor<float>(breast);
    const auto masks = unet_forward(ckpt.model.unet, params, tape, image_tensor<float>(image), breast_t);
    pd_hat = percent_density(tape, masks.dense, breast_t).item();
    mask = to_image(masks.dense);
  } else {
    double area = 0.0;
    for (float v : breast.pixels) area += v;
    if (area == 0.0) throw DomainError("empty breast mask");
    pd_hat = predict_pd(ckpt.model, params, image, breast);
    // The baseline has no segmentation head; its mask is the breast-masked
    // attention map.
    mask = attention_map(ckpt.model.vgg, params, image);
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) mask.pixels[i] *= breast.pixels[i];
    if (!a.out_attn.empty()) pgm::write(attention_map(ckpt.model.vgg, params, image), a.out_attn);
  }
  pgm::write(mask, a.out_mask);
  const double clamped = std::clamp(pd_hat, 0.0, 1.0);
  std::printf("pd_hat %.6f\nclass12 %d\nclass4 %d\n", pd_hat, density::pd_to_class12(clamped),
              density::pd_to_class4(clamped));
  return 0;
}

int run_gradcheck(const GradArgs& a) {
  const auto rows = run_gradcheck_suite(a.seed, a.ops);
  bool ok = true;
  std::printf("%-18s %14s %10s %8s %6s  %s\n", "op", "max_rel_error", "tolerance", "coords", "kinks", "status");
  for (const auto& r : rows) {
    std::printf("%-18s %14.3e %10.0e %8zu %6zu  %s\n", r.op.c_str(), r.max_rel_error, r.tolerance, r.coords_checked,
                r.kinks_skipped, r.passed() ? "ok" : "FAIL");
    ok = ok && r.passed();
  }
  return ok ? 0 : exit_runtime;
}

CLI::Validator power_of_two_size() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        try {
          const auto n = std::stoull(s);
          if (is_valid_phantom_size(n)) return {};
        } catch (const std::exception&) {
        }
        return "size must be a power of two ≥ 32";
      },
      "POW2>=32");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised breast density segmentation toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic phantom dataset");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.seed, "Master seed")->required();
  g->add_option("--train", gen.n_train, "Number of training phantoms")->required();
  g->add_option("--test", gen.n_test, "Number of test phantoms")->required();
  g->add_option("--size", gen.size, "Image side in pixels (power of two >= 32)")
      ->check(power_of_two_size())
      ->capture_default_str();
  g->add_flag("--stratified", gen.stratified, "Cycle through the 12 classes instead of drawing them");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on a manifest's train split");
  t->add_option("--manifest", tr.manifest, "Dataset manifest (JSON)")->required();
  t->add_option("--model", tr.model, "unet_relu | unet_softmax | vgg_baseline")
      ->required()
      ->check(CLI::IsMember(model_kind_names()));
  t->add_option("--epochs", tr.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--seed", tr.seed, "Seed for initialisation and shuffling")->capture_default_str();
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--log", tr.log, "Per-epoch CSV log (default: CKPT.log.csv)");
  t->add_option("--lambda-bin", tr.lambda_bin, "Binarisation penalty weight")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  t->add_option("--density-term", tr.density_term, "l1 | l2")
      ->check(CLI::IsMember({"l1", "l2"}))
      ->capture_default_str();
  t->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::NonNegativeNumber)->capture_default_str();
  t->add_option("--batch", tr.batch, "Minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_flag("--validate", tr.validate, "Log test-split MAE after every epoch");
  t->add_flag("--exact-pd", tr.exact_pd, "Train on exact pd instead of 12-class bin midpoints");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a checkpoint on a manifest split");
  e->add_option("--manifest", ev.manifest, "Dataset manifest (JSON)")->required();
  e->add_option("--split", ev.split, "train | test")->check(CLI::IsMember({"train", "test"}))->capture_default_str();
  e->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  e->add_option("--out", ev.out, "JSON report path")->required();
  e->add_option("--csv", ev.csv, "Optional CSV report path");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Predict density and export masks for one image");
  p->add_option("--ckpt", pr.ckpt, "Checkpoint")->required();
  p->add_option("--image", pr.image, "Input image (PGM)")->required();
  p->add_option("--breast", pr.breast, "Breast mask (PGM)")->required();
  p->add_option("--out-mask", pr.out_mask, "Output dense mask (PGM)")->required();
  p->add_option("--out-attn", pr.out_attn, "Output attention map (PGM, vgg_baseline only)");

  GradArgs gc;
  auto* c = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  c->add_option("--seed", gc.seed, "Seed for inputs and probed coordinates")->capture_default_str();
  c->add_option("--ops", gc.ops, "Comma-separated subset of: " + [] {
                  std::string s;
                  for (const auto& n : gradcheck_op_names()) s += (s.empty() ? "" : ",") + n;
                  return s;
                }())
      ->delimiter(',')
      ->check(CLI::IsMember(gradcheck_op_names()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return exit_usage;
  }

  try {
    if (g->parsed()) return run_gen(gen);
    if (t->parsed()) return run_train(tr);
    if (e->parsed()) return run_eval(ev);
    if (p->parsed()) return run_predict(pr);
    if (c->parsed()) return run_gradcheck(gc);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_runtime;
  }
  return exit_usage;
}
