#include "wdsm/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "wdsm/density_grid.hpp"
#include "wdsm/errors.hpp"
#include "wdsm/models.hpp"
#include "wdsm/trainer.hpp"
#include "wdsm/weak_loss.hpp"

namespace wdsm {

using nlohmann::json;

namespace {

Image masked(Image map, const Image& breast) {
  for (std::size_t i = 0; i < map.pixels.size(); ++i) map.pixels[i] *= breast.pixels[i];
  return map;
}

// Dense mask estimate and pd for one sample.
std::pair<Image, double> predict_sample(const ModelConfig& model, const ParamList<float>& params,
                                        const LoadedSample& s, bool want_mask) {
  if (model.is_unet()) {
    Tape<float> tape;
    const auto breast = mask_tensor<float>(s.breast_mask);
    const auto masks = unet_forward(model.unet, params, tape, image_tensor<float>(s.image), breast);
    const double pd = percent_density(tape, masks.dense, breast).item();
    return {to_image(masks.dense), pd};
  }
  const double pd = predict_pd(model, params, s.image, s.breast_mask);
  if (!want_mask) return {Image{}, pd};
  return {masked(attention_map(model.vgg, params, s.image), s.breast_mask), pd};
}

}  // namespace

EvalReport evaluate(const Checkpoint& checkpoint, const Manifest& manifest, Split split) {
  ParamList<float> params;
  try {
    params = params_from_checkpoint<float>(checkpoint);
  } catch (const FormatError& e) {
    throw FormatError(std::string("checkpoint does not match its model: ") + e.what());
  }
  const auto samples = load_split(manifest, split, /*with_dense=*/true);
  if (samples.empty()) throw DomainError("split '" + to_string(split) + "' is empty");

  EvalReport report;
  report.model = to_string(checkpoint.model.kind);
  report.split = split;
  report.mask_source = checkpoint.model.is_unet() ? "m_dense" : "grad_cam";
  const bool all_dense = std::all_of(samples.begin(), samples.end(), [](const auto& s) { return s.dense_truth.has_value(); });

  std::vector<double> preds, targets;
  std::vector<int> cls_pred, cls_true;
  metrics::SegmentationReport seg;
  for (const auto& s : samples) {
    auto [mask, pd_hat] = predict_sample(checkpoint.model, params, s, all_dense);
    SamplePrediction p;
    p.id = s.id;
    p.pd_true = s.pd;
    p.pd_hat = pd_hat;
    p.class4_true = density::pd_to_class4(s.pd);
    p.class4_pred = density::pd_to_class4(std::clamp(pd_hat, 0.0, 1.0));
    if (all_dense) {
      p.dice = metrics::dice(mask, *s.dense_truth, seg.threshold);
      seg.per_sample.push_back(*p.dice);
    }
    preds.push_back(p.pd_hat);
    targets.push_back(p.pd_true);
    cls_pred.push_back(p.class4_pred);
    cls_true.push_back(p.class4_true);
    report.samples.push_back(std::move(p));
  }

  report.regression.mae = metrics::mae(preds, targets);
  report.regression.mxae = metrics::mxae(preds, targets);
  try {
    report.regression.c_index = metrics::c_index(preds, targets);
  } catch (const DomainError&) {
    report.regression.c_index = std::numeric_limits<double>::quiet_NaN();
  }
  report.classification = metrics::classification_report(cls_pred, cls_true);
  if (all_dense) {
    double sum = 0.0;
    for (double d : seg.per_sample) sum += d;
    seg.mean = sum / static_cast<double>(seg.per_sample.size());
    report.segmentation = std::move(seg);
  }
  return report;
}

json to_json(const EvalReport& r) {
  auto number = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json confusion = json::array();
  for (const auto& row : r.classification.confusion) confusion.push_back(row);
  json samples = json::array();
  for (const auto& s : r.samples) {
    json j = {{"id", s.id},
              {"pd_true", s.pd_true},
              {"pd_hat", s.pd_hat},
              {"class4_true", s.class4_true},
              {"class4_pred", s.class4_pred}};
    if (s.dice) j["dice"] = *s.dice;
    samples.push_back(std::move(j));
  }
  json out = {{"model", r.model},
              {"split", to_string(r.split)},
              {"n", r.samples.size()},
              {"regression",
               {{"mae_pct", r.regression.mae}, {"mxae_pct", r.regression.mxae}, {"c_index", number(r.regression.c_index)}}},
              {"classification",
               {{"accuracy", r.classification.accuracy},
                {"precision_weighted", r.classification.precision_weighted},
                {"recall_weighted", r.classification.recall_weighted},
                {"f1_weighted", r.classification.f1_weighted},
                {"kappa_quadratic", r.classification.kappa_weighted},
                {"kappa_unweighted", r.classification.kappa_unweighted},
                {"confusion", std::move(confusion)}}},
              {"samples", std::move(samples)}};
  if (r.segmentation) {
    out["segmentation"] = {{"source", r.mask_source},
                           {"threshold", r.segmentation->threshold},
                           {"dice_mean", r.segmentation->mean},
                           {"dice", r.segmentation->per_sample}};
  }
  return out;
}

std::string to_csv(const std::vector<EvalReport>& reports) {
  const std::vector<std::string> header = {"model",       "split",   "n",        "accuracy", "precision",
                                           "recall",      "f1_score", "cohen_kappa", "mae_pct", "mxae_pct",
                                           "c_index",     "dice_mean"};
  std::vector<std::vector<std::string>> rows = {header};
  auto fmt = [](double v, const char* spec) {
    if (!std::isfinite(v)) return std::string();
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return std::string(buf);
  };
  for (const auto& r : reports) {
    const auto& c = r.classification;
    rows.push_back({r.model, to_string(r.split), std::to_string(r.samples.size()), fmt(c.accuracy, "%.3f"),
                    fmt(c.precision_weighted, "%.3f"), fmt(c.recall_weighted, "%.3f"), fmt(c.f1_weighted, "%.3f"),
                    fmt(c.kappa_weighted, "%.3f"), fmt(r.regression.mae, "%.3f"), fmt(r.regression.mxae, "%.3f"),
                    fmt(r.regression.c_index, "%.3f"),
                    r.segmentation ? fmt(r.segmentation->mean, "%.3f") : std::string()});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  std::ostringstream os;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) os << ',';
      os << row[i];
      if (i + 1 < row.size()) os << std::string(width[i] - row[i].size(), ' ');
    }
    os << '\n';
  }
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace wdsm
