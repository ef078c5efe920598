#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "wdsm/image.hpp"

namespace wdsm::metrics {

// Mean / max absolute error, in percentage points.
double mae(std::span<const double> preds, std::span<const double> targets);
double mxae(std::span<const double> preds, std::span<const double> targets);

// Concordance index over pairs with distinct targets; prediction ties count
// one half. Throws DomainError when no pair is comparable.
double c_index(std::span<const double> preds, std::span<const double> targets);

struct RegressionReport {
  double mae = 0.0;   // percent
  double mxae = 0.0;  // percent
  double c_index = 0.0;
};

RegressionReport regression_report(std::span<const double> preds, std::span<const double> targets);

inline constexpr int kClasses = 4;
using Confusion = std::array<std::array<std::size_t, kClasses>, kClasses>;  // [truth][pred]

struct ClassificationReport {
  double accuracy = 0.0;
  double precision_weighted = 0.0;
  double recall_weighted = 0.0;
  double f1_weighted = 0.0;
  double kappa_weighted = 0.0;    // quadratic weights (i-j)^2
  double kappa_unweighted = 0.0;  // plain Cohen's kappa, logged alongside
  Confusion confusion{};
};

// Per-class scores use 0 when their denominator is 0 and are averaged with
// true-class support weights.
ClassificationReport classification_report(std::span<const int> pred_class4, std::span<const int> true_class4);

// Quadratic-weighted kappa from a confusion matrix; 1 when the expected
// disagreement is zero (all mass in one diagonal cell).
double quadratic_kappa(const Confusion& confusion);

// 2|A n B| / (|A| + |B|) with A = {pred >= threshold}, B = {truth >= 0.5};
// 1 when both are empty.
double dice(const Image& pred, const Image& truth, double threshold = 0.5);

struct SegmentationReport {
  double threshold = 0.5;
  std::vector<double> per_sample;
  double mean = 0.0;
};

}  // namespace wdsm::metrics
