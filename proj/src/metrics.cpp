#include "wdsm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include "wdsm/errors.hpp"

namespace wdsm::metrics {
namespace {

void check_pair(std::span<const double> preds, std::span<const double> targets, std::size_t min_len) {
  if (preds.size() != targets.size()) {
    throw ShapeError("metric inputs differ in length: " + std::to_string(preds.size()) + " vs " +
                     std::to_string(targets.size()));
  }
  if (preds.size() < min_len) {
    throw DomainError("metric needs at least " + std::to_string(min_len) + " samples");
  }
}

// Fenwick tree over prediction ranks.
class RankCounter {
 public:
  explicit RankCounter(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t rank) {
    for (std::size_t i = rank + 1; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  // Number of inserted ranks < rank.
  std::uint64_t below(std::size_t rank) const {
    std::uint64_t s = 0;
    for (std::size_t i = rank; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::uint64_t> tree_;
};

}  // namespace

double mae(std::span<const double> preds, std::span<const double> targets) {
  check_pair(preds, targets, 1);
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - targets[i]);
  return 100.0 * s / static_cast<double>(preds.size());
}

double mxae(std::span<const double> preds, std::span<const double> targets) {
  check_pair(preds, targets, 1);
  double m = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) m = std::max(m, std::abs(preds[i] - targets[i]));
  return 100.0 * m;
}

double c_index(std::span<const double> preds, std::span<const double> targets) {
  check_pair(preds, targets, 2);
  const std::size_t n = preds.size();

  // Dense ranks of predictions.
  std::vector<double> sorted_preds(preds.begin(), preds.end());
  std::sort(sorted_preds.begin(), sorted_preds.end());
  sorted_preds.erase(std::unique(sorted_preds.begin(), sorted_preds.end()), sorted_preds.end());
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    rank[i] = static_cast<std::size_t>(std::lower_bound(sorted_preds.begin(), sorted_preds.end(), preds[i]) -
                                       sorted_preds.begin());
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return targets[a] < targets[b]; });

  // Walk groups of equal targets; every earlier item has a strictly smaller
  // target than the current group.
  RankCounter seen(sorted_preds.size());
  std::uint64_t concordant = 0, tied = 0, comparable = 0, inserted = 0;
  for (std::size_t g = 0; g < n;) {
    std::size_t end = g;
    while (end < n && targets[order[end]] == targets[order[g]]) ++end;
    for (std::size_t k = g; k < end; ++k) {
      const auto r = rank[order[k]];
      const auto lower = seen.below(r);
      const auto lower_or_equal = seen.below(r + 1);
      concordant += lower;
      tied += lower_or_equal - lower;
      comparable += inserted;
    }
    for (std::size_t k = g; k < end; ++k) seen.add(rank[order[k]]);
    inserted += end - g;
    g = end;
  }
  if (comparable == 0) throw DomainError("c_index undefined: all targets are equal");
  return static_cast<double>(2 * concordant + tied) / static_cast<double>(2 * comparable);
}

RegressionReport regression_report(std::span<const double> preds, std::span<const double> targets) {
  return {mae(preds, targets), mxae(preds, targets), c_index(preds, targets)};
}

double quadratic_kappa(const Confusion& confusion) {
  std::array<double, kClasses> rows{}, cols{};
  double total = 0.0;
  for (int i = 0; i < kClasses; ++i) {
    for (int j = 0; j < kClasses; ++j) {
      const auto v = static_cast<double>(confusion[i][j]);
      rows[i] += v;
      cols[j] += v;
      total += v;
    }
  }
  if (total == 0.0) throw DomainError("kappa of an empty confusion matrix");
  double observed = 0.0, expected = 0.0;
  for (int i = 0; i < kClasses; ++i) {
    for (int j = 0; j < kClasses; ++j) {
      const double w = static_cast<double>((i - j) * (i - j));
      observed += w * static_cast<double>(confusion[i][j]);
      expected += w * rows[i] * cols[j] / total;
    }
  }
  if (expected == 0.0) return 1.0;
  return 1.0 - observed / expected;
}

ClassificationReport classification_report(std::span<const int> pred_class4, std::span<const int> true_class4) {
  if (pred_class4.size() != true_class4.size()) throw ShapeError("classification inputs differ in length");
  if (pred_class4.empty()) throw DomainError("classification report of an empty input");
  ClassificationReport r;
  for (std::size_t i = 0; i < pred_class4.size(); ++i) {
    const int p = pred_class4[i], t = true_class4[i];
    if (p < 0 || p >= kClasses || t < 0 || t >= kClasses) throw DomainError("class labels must lie in 0..3");
    ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  const auto n = static_cast<double>(pred_class4.size());
  std::size_t trace = 0;
  for (int c = 0; c < kClasses; ++c) trace += r.confusion[c][c];
  r.accuracy = static_cast<double>(trace) / n;
  // Support-weighted recall collapses to sum_c TP_c / N.
  r.recall_weighted = r.accuracy;

  for (int c = 0; c < kClasses; ++c) {
    std::size_t support = 0, predicted = 0;
    for (int k = 0; k < kClasses; ++k) {
      support += r.confusion[c][k];
      predicted += r.confusion[k][c];
    }
    if (support == 0) continue;
    const double tp = static_cast<double>(r.confusion[c][c]);
    const double precision = predicted == 0 ? 0.0 : tp / static_cast<double>(predicted);
    const double recall = tp / static_cast<double>(support);
    const double f1 = precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    const double weight = static_cast<double>(support) / n;
    r.precision_weighted += weight * precision;
    r.f1_weighted += weight * f1;
  }

  r.kappa_weighted = quadratic_kappa(r.confusion);
  double po = 0.0, pe = 0.0;
  for (int c = 0; c < kClasses; ++c) {
    double row = 0.0, col = 0.0;
    for (int k = 0; k < kClasses; ++k) {
      row += static_cast<double>(r.confusion[c][k]);
      col += static_cast<double>(r.confusion[k][c]);
    }
    po += static_cast<double>(r.confusion[c][c]) / n;
    pe += (row / n) * (col / n);
  }
  r.kappa_unweighted = pe == 1.0 ? 1.0 : (po - pe) / (1.0 - pe);
  return r;
}

double dice(const Image& pred, const Image& truth, double threshold) {
  if (pred.height != truth.height || pred.width != truth.width || pred.pixels.size() != truth.pixels.size()) {
    throw ShapeError("dice: mask shapes differ");
  }
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
    const bool in_a = pred.pixels[i] >= threshold;
    const bool in_b = truth.pixels[i] >= 0.5f;
    a += in_a;
    b += in_b;
    both += in_a && in_b;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

}  // namespace wdsm::metrics
