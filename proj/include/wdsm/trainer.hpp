#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "wdsm/adam.hpp"
#include "wdsm/checkpoint.hpp"
#include "wdsm/dataset.hpp"
#include "wdsm/models.hpp"
#include "wdsm/weak_loss.hpp"

namespace wdsm {

struct TrainConfig {
  ModelConfig model = ModelConfig::defaults(ModelKind::unet_relu);
  int epochs = 30;
  int batch_size = 8;
  AdamConfig adam;
  std::uint64_t seed = 0;
  LossConfig loss;  // U-Net models; the VGG baseline uses MSE on PD
  int checkpoint_every = 0;  // epochs; 0 disables intermediate checkpoints
  // Train on the exact phantom pd instead of the 12-class bin midpoint.
  bool exact_pd = false;
  // Record test-split MAE after each epoch (uses pd labels only).
  bool validate = false;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_density = 0.0;
  double loss_bin = 0.0;
  std::optional<double> val_mae;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  // Columns: epoch, loss_total, loss_density, loss_bin, val_mae, seconds.
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  // Called every `checkpoint_every` epochs with the epoch number.
  std::function<void(int, const Checkpoint&)> on_checkpoint;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainLog log;
};

// Seeds used by train(): parameter init and batch shuffling draw from
// independent streams derived from the master seed.
std::uint64_t init_seed(std::uint64_t master);
std::uint64_t shuffle_seed(std::uint64_t master);

// Deterministic single-threaded training on the manifest's train split. Only
// images, breast masks and pd labels are read; dense-truth files never are.
TrainResult train(const TrainConfig& config, const Manifest& manifest, const TrainHooks& hooks = {});

// Mean per-sample training objective for a parameter set, evaluated without
// updating anything. Used to compare a model before and after training.
template <typename T>
double mean_training_loss(const TrainConfig& config, const ParamList<T>& params,
                          const std::vector<LoadedSample>& samples);

// Forward pass producing the image-level estimate: pd of m_dense for U-Nets,
// the sigmoid output for the VGG baseline.
template <typename T>
double predict_pd(const ModelConfig& model, const ParamList<T>& params, const Image& image, const Image& breast);

}  // namespace wdsm
