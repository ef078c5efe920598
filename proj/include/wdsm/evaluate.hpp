#pragma once

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "wdsm/checkpoint.hpp"
#include "wdsm/dataset.hpp"
#include "wdsm/metrics.hpp"

namespace wdsm {

struct SamplePrediction {
  std::string id;
  double pd_true = 0.0;
  double pd_hat = 0.0;
  int class4_true = 0;
  int class4_pred = 0;
  std::optional<double> dice;
};

struct EvalReport {
  std::string model;
  Split split = Split::test;
  metrics::RegressionReport regression;  // c_index is NaN when undefined
  metrics::ClassificationReport classification;
  // Present only when the split carries dense-truth masks. U-Nets are scored
  // on m_dense, the VGG baseline on its breast-masked Grad-CAM map.
  std::optional<metrics::SegmentationReport> segmentation;
  std::string mask_source;
  std::vector<SamplePrediction> samples;
};

// Scores a checkpoint on one manifest split.
EvalReport evaluate(const Checkpoint& checkpoint, const Manifest& manifest, Split split);

nlohmann::json to_json(const EvalReport& report);

// Aligned-column CSV, one row per report. Column order follows the
// classification table (accuracy, precision, recall, F1, kappa) and then the
// regression table (MAE %, MxAE %, C-index); Dice last.
std::string to_csv(const std::vector<EvalReport>& reports);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace wdsm
