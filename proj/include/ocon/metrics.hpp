#pragma once

// Binary evaluation: confusion counts, detection-error rates and ROC/AUC.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ocon/error.hpp"

namespace ocon {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Positive prediction iff score > threshold.
inline ConfusionCounts confusion_at(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5) {
  if (scores.size() != labels.size()) throw Error(Errc::DimensionMismatch, "scores and labels differ in length");
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] > threshold;
    const bool actual = labels[i] == 1;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

/// nullopt marks an undefined metric (zero denominator), never a silent 0.
struct DetMetrics {
  std::optional<double> er;   // (FP + FN) / N
  std::optional<double> fdr;  // FP / (FP + TP)
  std::optional<double> for_; // FN / (FN + TN)
  std::optional<double> npv;  // TN / (TN + FN)

  std::vector<std::string_view> undefined() const {
    std::vector<std::string_view> names;
    if (!er) names.push_back("ER");
    if (!fdr) names.push_back("FDR");
    if (!for_) names.push_back("FOR");
    if (!npv) names.push_back("NPV");
    return names;
  }
};

inline DetMetrics det_metrics(const ConfusionCounts& c) {
  auto ratio = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  DetMetrics m;
  m.er = ratio(c.fp + c.fn, c.total());
  m.fdr = ratio(c.fp, c.fp + c.tp);
  m.for_ = ratio(c.fn, c.fn + c.tn);
  // Complement of FOR over the same denominator so NPV + FOR == 1 exactly.
  if (m.for_) m.npv = 1.0 - *m.for_;
  return m;
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // scores >= threshold are called positive
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1)
  double auc = 0.0;
};

/// Threshold sweep over the distinct scores (descending) with trapezoidal
/// area. Tied scores move the curve diagonally, which counts ties as 1/2.
inline RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(Errc::DimensionMismatch, "scores and labels differ in length");
  const auto positives = static_cast<std::uint64_t>(std::count(labels.begin(), labels.end(), 1));
  const auto negatives = static_cast<std::uint64_t>(labels.size()) - positives;
  if (positives == 0 || negatives == 0) throw Error(Errc::SingleClassInput, "ROC needs both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::uint64_t tp = 0, fp = 0;
  // Twice the area in units of one (positive, negative) pair; exact in integers.
  std::uint64_t doubled_area = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    const std::uint64_t tp_before = tp, fp_before = fp;
    for (; i < order.size() && scores[order[i]] == threshold; ++i) (labels[order[i]] == 1 ? tp : fp) += 1;
    doubled_area += (fp - fp_before) * (tp + tp_before);
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                            static_cast<double>(tp) / static_cast<double>(positives), threshold});
  }
  curve.auc = static_cast<double>(doubled_area) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
  return curve;
}

}  // namespace ocon
