#include "wdsm/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "wdsm/density_grid.hpp"
#include "wdsm/errors.hpp"
#include "wdsm/metrics.hpp"
#include "wdsm/ops.hpp"
#include "wdsm/rng.hpp"

namespace wdsm {

using nlohmann::json;

json to_json(const TrainConfig& c) {
  return {{"model", to_json(c.model)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},
          {"seed", c.seed},
          {"density_term", to_string(c.loss.density_term)},
          {"lambda_bin", c.loss.lambda_bin},
          {"checkpoint_every", c.checkpoint_every},
          {"exact_pd", c.exact_pd},
          {"validate", c.validate}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    c.model = model_config_from_json(j.at("model"));
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.adam.lr = j.at("lr").get<double>();
    c.adam.beta1 = j.at("beta1").get<double>();
    c.adam.beta2 = j.at("beta2").get<double>();
    c.adam.eps = j.at("eps").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.loss.density_term = parse_density_term(j.at("density_term").get<std::string>());
    c.loss.lambda_bin = j.at("lambda_bin").get<double>();
    c.checkpoint_every = j.value("checkpoint_every", 0);
    c.exact_pd = j.value("exact_pd", false);
    c.validate = j.value("validate", false);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad train config: ") + e.what());
  }
  return c;
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << "epoch,loss_total,loss_density,loss_bin,val_mae,seconds\n";
  char buf[256];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,", e.epoch, e.loss_total, e.loss_density, e.loss_bin);
    os << buf;
    if (e.val_mae) {
      std::snprintf(buf, sizeof buf, "%.6f", *e.val_mae);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.3f\n", e.seconds);
    os << buf;
  }
  return os.str();
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write training log " + path.string());
  out << to_csv();
}

std::uint64_t init_seed(std::uint64_t master) { return derive_seed(master, 0x1A17ULL); }
std::uint64_t shuffle_seed(std::uint64_t master) { return derive_seed(master, 0x5FF1EULL); }

namespace {

void check_config(const TrainConfig& c) {
  if (c.epochs < 1) throw DomainError("epochs must be >= 1");
  if (c.batch_size < 1) throw DomainError("batch size must be >= 1");
  if (!(c.adam.lr >= 0.0) || !(c.adam.eps > 0.0)) throw DomainError("lr must be >= 0 and eps > 0");
  if (!(c.adam.beta1 > 0.0 && c.adam.beta1 < 1.0 && c.adam.beta2 > 0.0 && c.adam.beta2 < 1.0)) {
    throw DomainError("Adam betas must lie in (0,1)");
  }
  if (!(c.loss.lambda_bin >= 0.0)) throw DomainError("lambda_bin must be non-negative");
  if (c.checkpoint_every < 0) throw DomainError("checkpoint_every must be >= 0");
}

template <typename T>
std::vector<LossSample<T>> to_loss_samples(const std::vector<LoadedSample>& samples, bool exact_pd) {
  std::vector<LossSample<T>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    out.push_back({image_tensor<T>(s.image), mask_tensor<T>(s.breast_mask),
                   exact_pd ? s.pd : density::class12_to_pd(s.class12)});
  }
  return out;
}

template <typename T>
struct Objective {
  Tensor<T> mean_total;
  std::vector<LossReport> per_sample;
};

// Mean objective over a batch: weak loss for U-Nets, MSE on pd for VGG.
template <typename T>
Objective<T> batch_objective(const TrainConfig& config, const ParamList<T>& params, Tape<T>& tape,
                             std::span<const LossSample<T>> batch) {
  if (config.model.is_unet()) {
    const MaskForward<T> forward = [&](Tape<T>& t, const LossSample<T>& s) {
      return unet_forward(config.model.unet, params, t, s.image, s.breast_mask);
    };
    auto b = batch_loss(tape, batch, forward, config.loss);
    return {b.mean_total, std::move(b.per_sample)};
  }
  Objective<T> out;
  Tensor<T> sum;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto pred = vgg_forward(config.model.vgg, params, tape, batch[i].image).pd;
    const auto err = ops::sub(tape, pred, Tensor<T>::scalar(static_cast<T>(batch[i].pd_target)));
    const auto mse = ops::reduce_sum(tape, ops::square(tape, err));
    out.per_sample.push_back({static_cast<double>(mse.item()), static_cast<double>(mse.item()), 0.0,
                              static_cast<double>(pred.item())});
    sum = i == 0 ? mse : ops::add(tape, sum, mse);
  }
  out.mean_total = ops::div(tape, sum, Tensor<T>::scalar(static_cast<T>(batch.size())));
  return out;
}

template <typename T>
double mean_abs_error_pct(const ModelConfig& model, const ParamList<T>& params,
                          const std::vector<LoadedSample>& samples) {
  std::vector<double> preds, targets;
  for (const auto& s : samples) {
    preds.push_back(predict_pd(model, params, s.image, s.breast_mask));
    targets.push_back(s.pd);
  }
  return metrics::mae(preds, targets);
}

}  // namespace

template <typename T>
double predict_pd(const ModelConfig& model, const ParamList<T>& params, const Image& image, const Image& breast) {
  Tape<T> tape;
  if (model.is_unet()) {
    const auto breast_t = mask_tensor<T>(breast);
    const auto masks = unet_forward(model.unet, params, tape, image_tensor<T>(image), breast_t);
    return static_cast<double>(percent_density(tape, masks.dense, breast_t).item());
  }
  return static_cast<double>(vgg_forward(model.vgg, params, tape, image_tensor<T>(image)).pd.item());
}

template <typename T>
double mean_training_loss(const TrainConfig& config, const ParamList<T>& params,
                          const std::vector<LoadedSample>& samples) {
  if (samples.empty()) throw DomainError("mean_training_loss: no samples");
  const auto items = to_loss_samples<T>(samples, config.exact_pd);
  ParamList<T> frozen;
  for (const auto& p : params) frozen.push_back({p.name, p.value.clone(false)});
  Tape<T> tape;
  return static_cast<double>(batch_objective(config, frozen, tape, std::span<const LossSample<T>>(items))
                                 .mean_total.item());
}

TrainResult train(const TrainConfig& config, const Manifest& manifest, const TrainHooks& hooks) {
  using T = float;
  check_config(config);
  const auto train_samples = load_split(manifest, Split::train, /*with_dense=*/false);
  if (train_samples.empty()) throw DomainError("manifest has no training samples");
  std::vector<LoadedSample> val_samples;
  if (config.validate) val_samples = load_split(manifest, Split::test, /*with_dense=*/false);

  std::vector<LossSample<T>> items;
  try {
    items = to_loss_samples<T>(train_samples, config.exact_pd);
  } catch (const std::exception& e) {
    throw FormatError(std::string("while preparing training samples: ") + e.what());
  }

  auto params = init_params<T>(config.model, init_seed(config.seed));
  Adam<T> optimizer(params, config.adam);
  Rng shuffler(shuffle_seed(config.seed));
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);

  TrainResult result;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffler.shuffle(order.begin(), order.end());
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      std::vector<LossSample<T>> chunk;
      for (std::size_t i = start; i < stop; ++i) chunk.push_back(items[order[i]]);
      for (auto& p : params) p.value.zero_grad();
      Tape<T> tape;
      Objective<T> obj;
      try {
        obj = batch_objective(config, params, tape, std::span<const LossSample<T>>(chunk));
      } catch (const std::exception& e) {
        throw std::runtime_error("training batch starting with " + train_samples[order[start]].id + ": " +
                                 e.what());
      }
      tape.backward(obj.mean_total);
      optimizer.step(params);
      for (const auto& r : obj.per_sample) {
        rec.loss_total += r.total;
        rec.loss_density += r.density_term;
        rec.loss_bin += r.bin_term;
      }
    }
    const auto n = static_cast<double>(items.size());
    rec.loss_total /= n;
    rec.loss_density /= n;
    rec.loss_bin /= n;
    if (config.validate && !val_samples.empty()) {
      rec.val_mae = mean_abs_error_pct(config.model, params, val_samples);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 && hooks.on_checkpoint) {
      hooks.on_checkpoint(epoch, make_checkpoint(config.model, params, to_json(config)));
    }
  }
  result.checkpoint = make_checkpoint(config.model, params, to_json(config));
  return result;
}

template double predict_pd<float>(const ModelConfig&, const ParamList<float>&, const Image&, const Image&);
template double predict_pd<double>(const ModelConfig&, const ParamList<double>&, const Image&, const Image&);
template double mean_training_loss<float>(const TrainConfig&, const ParamList<float>&,
                                          const std::vector<LoadedSample>&);
template double mean_training_loss<double>(const TrainConfig&, const ParamList<double>&,
                                           const std::vector<LoadedSample>&);

}  // namespace wdsm
