#pragma once

// Balanced one-vs-rest subsets: every row of the true class plus an evenly
// sized uniform down-sample of each false class.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ocon/error.hpp"
#include "ocon/features.hpp"
#include "ocon/rng.hpp"

namespace ocon {

/// Largest accepted |positives - negatives|.
inline constexpr std::size_t kMaxAbsoluteImbalance = 3;

/// Half away from zero.
inline double round_half_away(double x) { return x < 0.0 ? -std::floor(-x + 0.5) : std::floor(x + 0.5); }

struct NegativeGroup {
  int source_class = 0;
  std::vector<std::size_t> rows;
};

struct BalancedSubset {
  int true_class = 0;
  std::vector<std::size_t> positives;
  std::vector<NegativeGroup> negatives;  // ascending source class
  std::uint64_t seed = 0;
  /// |P - N| / P within the relative balancing tolerance. Informational.
  bool within_relative_tolerance = true;

  std::size_t negative_count() const {
    std::size_t n = 0;
    for (const auto& g : negatives) n += g.rows.size();
    return n;
  }
  std::size_t size() const { return positives.size() + negative_count(); }

  /// Positives first, then negatives by source class.
  std::vector<std::size_t> rows() const {
    std::vector<std::size_t> out(positives);
    for (const auto& g : negatives) out.insert(out.end(), g.rows.begin(), g.rows.end());
    return out;
  }
  /// Binary targets aligned with rows(): 1 for positives, 0 for negatives.
  std::vector<int> targets() const {
    std::vector<int> out(positives.size(), 1);
    out.resize(size(), 0);
    return out;
  }
};

/// Per-false-class sample counts before availability capping: every class
/// starts at round(P / (K-1)); when that leaves |P - N| above the absolute
/// bound, just enough (seed-chosen) classes move one step toward P.
inline std::vector<std::size_t> false_class_sizes(std::size_t positives, std::size_t false_classes, Rng& rng) {
  const auto target = static_cast<std::size_t>(round_half_away(static_cast<double>(positives) / static_cast<double>(false_classes)));
  std::vector<std::size_t> sizes(false_classes, target);
  const auto total = static_cast<long long>(target * false_classes);
  const auto diff = static_cast<long long>(positives) - total;
  const auto excess = std::llabs(diff) - static_cast<long long>(kMaxAbsoluteImbalance);
  if (excess > 0) {
    std::vector<std::size_t> order(false_classes);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    for (long long i = 0; i < excess; ++i) {
      auto& s = sizes[order[static_cast<std::size_t>(i)]];
      s = diff > 0 ? s + 1 : s - 1;
    }
  }
  return sizes;
}

/// `labels` holds class ids in [0, num_classes). Every class must have rows.
inline BalancedSubset build_balanced_subset(std::span<const int> labels, int num_classes, int true_class,
                                            std::uint64_t seed, double relative_tolerance = 0.01) {
  if (true_class < 0 || true_class >= num_classes) throw Error(Errc::UnknownClass, "class " + std::to_string(true_class));
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw Error(Errc::UnknownClass, "label " + std::to_string(labels[i]) + " at row " + std::to_string(i));
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }

  BalancedSubset subset;
  subset.true_class = true_class;
  subset.seed = seed;
  subset.positives = by_class[static_cast<std::size_t>(true_class)];
  if (subset.positives.empty()) throw Error(Errc::UnknownClass, "class " + std::to_string(true_class) + " has no rows");
  if (num_classes < 2) throw Error(Errc::EmptyFalseClass, "no false classes");
  for (int c = 0; c < num_classes; ++c)
    if (c != true_class && by_class[static_cast<std::size_t>(c)].empty()) throw Error(Errc::EmptyFalseClass, "class " + std::to_string(c));

  Rng rng(seed);
  const auto sizes = false_class_sizes(subset.positives.size(), static_cast<std::size_t>(num_classes - 1), rng);
  std::size_t slot = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (c == true_class) continue;
    auto pool = by_class[static_cast<std::size_t>(c)];
    const std::size_t take = std::min(sizes[slot++], pool.size());
    // Partial Fisher-Yates: the first `take` entries become a uniform sample.
    for (std::size_t i = 0; i < take; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    pool.resize(take);
    subset.negatives.push_back({c, std::move(pool)});
  }

  const auto p = static_cast<long long>(subset.positives.size());
  const auto n = static_cast<long long>(subset.negative_count());
  if (static_cast<std::size_t>(std::llabs(p - n)) > kMaxAbsoluteImbalance)
    throw Error(Errc::BalanceToleranceExceeded, std::to_string(p) + " positives vs " + std::to_string(n) +
                                                    " negatives after availability capping");
  subset.within_relative_tolerance = static_cast<double>(std::llabs(p - n)) / static_cast<double>(p) <= relative_tolerance;
  return subset;
}

inline BalancedSubset build_balanced_subset(const FeatureMatrix& m, int true_class, std::uint64_t seed,
                                            double relative_tolerance = 0.01) {
  return build_balanced_subset(m.labels, m.num_classes(), true_class, seed, relative_tolerance);
}

/// Same algorithm over speaker classes (male, female, children) regardless
/// of the matrix's own label system.
inline BalancedSubset speaker_balanced_subset(const FeatureMatrix& m, int true_group, std::uint64_t seed,
                                              double relative_tolerance = 0.01) {
  std::vector<int> labels;
  labels.reserve(m.groups.size());
  for (auto g : m.groups) labels.push_back(speaker_class(g));
  return build_balanced_subset(labels, kSpeakerClassCount, true_group, seed, relative_tolerance);
}

}  // namespace ocon
