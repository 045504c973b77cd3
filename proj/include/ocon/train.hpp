#pragma once

// One training cycle for a single one-class network: balanced subset ->
// stratified split -> mini-batch epochs, with the subset and split rebuilt at
// every batch-set boundary and a two-variable early-stopping rule
// (rolling per-sample training loss AND held-out accuracy).

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ocon/balancer.hpp"
#include "ocon/config.hpp"
#include "ocon/error.hpp"
#include "ocon/features.hpp"
#include "ocon/mlp.hpp"
#include "ocon/rng.hpp"

namespace ocon {

enum class StopReason : std::uint8_t { EarlyStop, ExhaustedBudget, Diverged };

inline constexpr std::string_view stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::EarlyStop: return "EarlyStop";
    case StopReason::ExhaustedBudget: return "ExhaustedBudget";
    case StopReason::Diverged: return "Diverged";
  }
  return "?";
}

/// Split the early-stopping accuracy is measured on. Test reproduces the
/// original protocol (and leaks the test split into the stopping decision).
enum class AccuracySplit : std::uint8_t { Dev, Test };

struct SplitFractions {
  double train = 0.70;
  double dev = 0.15;
  double test = 0.15;
};

struct EarlyStopConfig {
  /// Rolling mean of the last `loss_window` per-sample training losses must
  /// fall below this. A threshold of 0 disables early stopping.
  double loss_threshold = 0.15;
  std::size_t loss_window = 50;
  /// Percent.
  double accuracy_threshold = 95.0;
};

struct TrainConfig {
  SplitFractions split;
  std::size_t epochs_per_batch_set = 1000;
  std::size_t max_batch_sets = 30;
  EarlyStopConfig early_stop;
  AccuracySplit accuracy_split = AccuracySplit::Dev;
  std::size_t k_folds = 3;
  double balancing_tolerance = 0.01;
  /// Rebuild the balanced subset (and split) at every batch-set boundary.
  bool reencode_each_batch_set = true;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(Errc::InvalidConfig, what); };
    const auto& s = split;
    if (!(s.train > 0.0 && s.dev > 0.0 && s.test > 0.0)) fail("split fractions must be > 0");
    if (std::abs(s.train + s.dev + s.test - 1.0) > 1e-9) fail("split fractions must sum to 1");
    if (early_stop.loss_window < 1) fail("loss_window must be >= 1");
    if (!std::isfinite(early_stop.loss_threshold) || !std::isfinite(early_stop.accuracy_threshold)) fail("thresholds must be finite");
    if (epochs_per_batch_set < 1 || max_batch_sets < 1) fail("epoch budget must be >= 1");
    if (k_folds < 2) fail("k_folds must be >= 2");
    if (!(balancing_tolerance >= 0.0)) fail("balancing tolerance must be >= 0");
  }
};

/// Matrix rows with their binary targets.
struct LabeledRows {
  std::vector<std::size_t> rows;
  std::vector<int> targets;

  std::size_t size() const { return rows.size(); }
  std::size_t positives() const { return static_cast<std::size_t>(std::count(targets.begin(), targets.end(), 1)); }
};

struct Split {
  LabeledRows train;
  LabeledRows dev;
  LabeledRows test;
};

inline LabeledRows labeled_rows(const BalancedSubset& subset) { return {subset.rows(), subset.targets()}; }

namespace detail {

/// Largest-remainder apportionment of `total` items over weights; ties go to
/// the earlier part.
inline std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights) {
  const double weight_sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(weights.size());
  std::vector<double> remainders(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double quota = static_cast<double>(total) * weights[i] / weight_sum;
    counts[i] = static_cast<std::size_t>(std::floor(quota));
    remainders[i] = quota - std::floor(quota);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[order[k % order.size()]];
  return counts;
}

}  // namespace detail

/// Stratified partition into parts sized round(fraction / sum * N) (the last
/// part takes the remainder); within each part the positive count is within one
/// sample of its proportional share. Deterministic per seed.
inline std::vector<LabeledRows> split_rows(const LabeledRows& data, std::span<const double> fractions, std::uint64_t seed) {
  const std::size_t n = data.size();
  const double total = std::accumulate(fractions.begin(), fractions.end(), 0.0);
  std::vector<std::size_t> sizes(fractions.size());
  std::size_t used = 0;
  for (std::size_t i = 0; i + 1 < fractions.size(); ++i) {
    const double share = fractions[i] / total * static_cast<double>(n);
    sizes[i] = std::min(n - used, static_cast<std::size_t>(round_half_away(share)));
    used += sizes[i];
  }
  sizes.back() = n - used;
  for (auto s : sizes)
    if (s == 0) throw Error(Errc::TooFewSamples, std::to_string(n) + " samples leave an empty split");

  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < n; ++i) (data.targets[i] == 1 ? pos : neg).push_back(i);
  std::vector<double> weights(sizes.begin(), sizes.end());
  const auto pos_counts = detail::apportion(pos.size(), weights);

  Rng rng(seed);
  rng.shuffle(pos.begin(), pos.end());
  rng.shuffle(neg.begin(), neg.end());
  std::vector<LabeledRows> parts(sizes.size());
  std::size_t pi = 0, ni = 0;
  for (std::size_t p = 0; p < sizes.size(); ++p) {
    auto take = [&](std::size_t idx) {
      parts[p].rows.push_back(data.rows[idx]);
      parts[p].targets.push_back(data.targets[idx]);
    };
    for (std::size_t k = 0; k < pos_counts[p]; ++k) take(pos[pi++]);
    for (std::size_t k = pos_counts[p]; k < sizes[p]; ++k) take(neg[ni++]);
  }
  return parts;
}

inline Split split_dataset(const LabeledRows& data, const SplitFractions& f, std::uint64_t seed) {
  const double fractions[] = {f.train, f.dev, f.test};
  auto parts = split_rows(data, fractions, seed);
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

inline Split split_dataset(const BalancedSubset& subset, const SplitFractions& f, std::uint64_t seed) {
  return split_dataset(labeled_rows(subset), f, seed);
}

/// k stratified folds (sizes differ by at most one).
inline std::vector<LabeledRows> make_folds(const LabeledRows& data, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > data.size()) throw Error(Errc::TooFewSamples, std::to_string(data.size()) + " samples for " + std::to_string(k) + " folds");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < data.size(); ++i) (data.targets[i] == 1 ? pos : neg).push_back(i);
  Rng rng(seed);
  rng.shuffle(pos.begin(), pos.end());
  rng.shuffle(neg.begin(), neg.end());
  std::vector<LabeledRows> folds(k);
  std::size_t slot = 0;
  for (const auto* stratum : {&pos, &neg})
    for (auto idx : *stratum) {
      folds[slot % k].rows.push_back(data.rows[idx]);
      folds[slot % k].targets.push_back(data.targets[idx]);
      ++slot;
    }
  return folds;
}

inline Eigen::MatrixXd gather_rows(const FeatureMatrix& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd batch(static_cast<Eigen::Index>(rows.size()), m.values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) batch.row(static_cast<Eigen::Index>(i)) = m.values.row(static_cast<Eigen::Index>(rows[i]));
  return batch;
}

/// Binary decision rule: probability > 0.5 is the positive class.
inline constexpr double kDecisionThreshold = 0.5;

/// Percent of rows classified correctly in inference mode.
inline double binary_accuracy(const MlpParams& params, const MlpConfig& config, const FeatureMatrix& m, const LabeledRows& data) {
  if (data.size() == 0) return 0.0;
  const Eigen::VectorXd p = predict(params, config, gather_rows(m, data.rows));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += static_cast<int>(p(static_cast<Eigen::Index>(i)) > kDecisionThreshold) == data.targets[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

struct BatchSetRecord {
  std::size_t index = 0;
  std::size_t first_epoch = 0;
  std::uint64_t subset_seed = 0;
  std::uint64_t split_seed = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t train = 0;
  std::size_t dev = 0;
  std::size_t test = 0;
  bool within_relative_tolerance = true;
};

struct TrainReport {
  int true_class = 0;
  std::uint64_t seed = 0;
  std::vector<double> loss_curve;  // per-epoch mean training loss
  std::vector<BatchSetRecord> batch_sets;
  std::size_t epochs = 0;
  /// Sample-gradient evaluations performed; a scheduling-independent cost.
  std::uint64_t work = 0;
  double test_accuracy = 0.0;  // percent
  double held_out_accuracy = 0.0;
  double final_rolling_loss = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
  StopReason stop = StopReason::ExhaustedBudget;
  std::string diagnostics;
};

struct TrainOutcome {
  MlpModel model;
  TrainReport report;
};

/// Supplies the split for batch-set `index` and fills the manifest record.
using SplitProvider = std::function<Split(std::size_t index, BatchSetRecord& record)>;

/// The mini-batch loop shared by train_one_class and k_fold_evaluate.
inline TrainOutcome run_training_cycle(const FeatureMatrix& m, int true_class, MlpConfig mlp, const TrainConfig& train,
                                       std::uint64_t cycle_seed, const SplitProvider& provider) {
  mlp.input_dim = m.dim();
  mlp.seed = cycle_seed;
  mlp.validate();
  train.validate();
  const auto started = std::chrono::steady_clock::now();

  TrainOutcome out;
  out.model.config = mlp;
  out.model.scaling_hash = scaling_hash(m.scaling);
  auto& params = out.model.params;
  params = init_params(mlp);
  auto& report = out.report;
  report.true_class = true_class;
  report.seed = cycle_seed;

  Rng shuffle_rng(derive_seed(cycle_seed, Stream::Shuffle));
  Rng dropout_rng(derive_seed(cycle_seed, Stream::Dropout));
  const auto& es = train.early_stop;
  std::vector<double> window(es.loss_window, 0.0);
  std::size_t window_filled = 0, window_next = 0;
  auto rolling_mean = [&] {
    double sum = 0.0;
    for (std::size_t i = 0; i < window_filled; ++i) sum += window[i];
    return window_filled ? sum / static_cast<double>(window_filled) : std::numeric_limits<double>::infinity();
  };

  Split split;
  bool stopped = false;
  try {
    for (std::size_t bs = 0; bs < train.max_batch_sets && !stopped; ++bs) {
      if (bs == 0 || train.reencode_each_batch_set) {
        BatchSetRecord record;
        record.index = bs;
        split = provider(bs, record);
        record.first_epoch = report.epochs;
        record.train = split.train.size();
        record.dev = split.dev.size();
        record.test = split.test.size();
        report.batch_sets.push_back(record);
      }
      const LabeledRows& held_out = train.accuracy_split == AccuracySplit::Dev ? split.dev : split.test;
      std::vector<std::size_t> order(split.train.size());
      std::iota(order.begin(), order.end(), 0);
      std::vector<std::size_t> batch_rows;
      std::vector<double> batch_targets;

      for (std::size_t epoch = 0; epoch < train.epochs_per_batch_set; ++epoch) {
        shuffle_rng.shuffle(order.begin(), order.end());
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += mlp.batch_size) {
          const std::size_t stop = std::min(order.size(), start + mlp.batch_size);
          batch_rows.clear();
          batch_targets.clear();
          for (std::size_t k = start; k < stop; ++k) {
            batch_rows.push_back(split.train.rows[order[k]]);
            batch_targets.push_back(split.train.targets[order[k]]);
          }
          const auto step = train_step(params, mlp, gather_rows(m, batch_rows), batch_targets, dropout_rng);
          epoch_loss += step.loss * static_cast<double>(stop - start);
          for (Eigen::Index i = 0; i < step.sample_losses.size(); ++i) {
            window[window_next] = step.sample_losses(i);
            window_next = (window_next + 1) % window.size();
            window_filled = std::min(window_filled + 1, window.size());
          }
          report.work += stop - start;
        }
        report.loss_curve.push_back(epoch_loss / static_cast<double>(order.size()));
        ++report.epochs;
        report.final_rolling_loss = rolling_mean();
        report.held_out_accuracy = binary_accuracy(params, mlp, m, held_out);
        if (report.final_rolling_loss < es.loss_threshold && report.held_out_accuracy >= es.accuracy_threshold) {
          report.stop = StopReason::EarlyStop;
          stopped = true;
          break;
        }
      }
    }
    report.test_accuracy = binary_accuracy(params, mlp, m, split.test);
  } catch (const Error& e) {
    if (e.code() != Errc::NonFiniteLoss) throw;
    report.stop = StopReason::Diverged;
    report.diagnostics = std::string(e.what()) + " at epoch " + std::to_string(report.epochs);
    report.test_accuracy = 0.0;
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

/// Trains the one-class network for `true_class`. The balanced subset and
/// its split are rebuilt from derived seeds at every batch-set boundary.
inline TrainOutcome train_one_class(const FeatureMatrix& m, int true_class, const MlpConfig& mlp, const TrainConfig& train) {
  const std::uint64_t seed = train.seed;
  auto provider = [&](std::size_t bs, BatchSetRecord& record) {
    record.subset_seed = derive_seed(seed, Stream::Subset, bs);
    record.split_seed = derive_seed(seed, Stream::Split, bs);
    const auto subset = build_balanced_subset(m, true_class, record.subset_seed, train.balancing_tolerance);
    record.positives = subset.positives.size();
    record.negatives = subset.negative_count();
    record.within_relative_tolerance = subset.within_relative_tolerance;
    return split_dataset(subset, train.split, record.split_seed);
  };
  return run_training_cycle(m, true_class, mlp, train, seed, provider);
}

struct KFoldResult {
  double mean_accuracy = 0.0;  // percent; -inf when any fold diverged
  double mean_seconds = 0.0;
  double mean_work = 0.0;
  std::vector<TrainReport> reports;
};

/// One balanced subset, k stratified folds; fold f is the test set and the
/// remainder is re-split into train/dev (fresh split at each batch set).
inline KFoldResult k_fold_evaluate(const FeatureMatrix& m, int true_class, const MlpConfig& mlp, const TrainConfig& train,
                                   std::size_t k) {
  const auto subset = build_balanced_subset(m, true_class, derive_seed(train.seed, Stream::Subset), train.balancing_tolerance);
  const auto folds = make_folds(labeled_rows(subset), k, derive_seed(train.seed, Stream::Fold));
  const double remainder_fractions[] = {train.split.train, train.split.dev};

  KFoldResult result;
  bool diverged = false;
  for (std::size_t f = 0; f < k; ++f) {
    LabeledRows remainder;
    for (std::size_t g = 0; g < k; ++g) {
      if (g == f) continue;
      remainder.rows.insert(remainder.rows.end(), folds[g].rows.begin(), folds[g].rows.end());
      remainder.targets.insert(remainder.targets.end(), folds[g].targets.begin(), folds[g].targets.end());
    }
    const std::uint64_t fold_seed = derive_seed(train.seed, Stream::Fold, f + 1);
    auto provider = [&](std::size_t bs, BatchSetRecord& record) {
      record.subset_seed = derive_seed(train.seed, Stream::Subset);
      record.split_seed = derive_seed(fold_seed, Stream::Split, bs);
      record.positives = subset.positives.size();
      record.negatives = subset.negative_count();
      record.within_relative_tolerance = subset.within_relative_tolerance;
      auto parts = split_rows(remainder, remainder_fractions, record.split_seed);
      return Split{std::move(parts[0]), std::move(parts[1]), folds[f]};
    };
    auto outcome = run_training_cycle(m, true_class, mlp, train, fold_seed, provider);
    diverged = diverged || outcome.report.stop == StopReason::Diverged;
    result.mean_accuracy += outcome.report.test_accuracy;
    result.mean_seconds += outcome.report.seconds;
    result.mean_work += static_cast<double>(outcome.report.work);
    result.reports.push_back(std::move(outcome.report));
  }
  const double kd = static_cast<double>(k);
  result.mean_accuracy = diverged ? -std::numeric_limits<double>::infinity() : result.mean_accuracy / kd;
  result.mean_seconds /= kd;
  result.mean_work /= kd;
  return result;
}

/// Human-readable per-cycle manifest (key = value). Without timing the text
/// is a deterministic function of the seeds.
inline std::string format_train_report(const TrainReport& r, std::string_view class_name, bool with_timing = true) {
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  kv("class", std::string(class_name));
  kv("seed", std::to_string(r.seed));
  kv("stop_reason", std::string(stop_reason_name(r.stop)));
  kv("epochs", std::to_string(r.epochs));
  kv("work", std::to_string(r.work));
  kv("test_accuracy", format_double(r.test_accuracy));
  kv("held_out_accuracy", format_double(r.held_out_accuracy));
  kv("final_rolling_loss", format_double(r.final_rolling_loss));
  if (with_timing) kv("seconds", format_double(r.seconds));
  if (!r.diagnostics.empty()) kv("diagnostics", r.diagnostics);
  for (const auto& b : r.batch_sets) {
    const auto p = "batch_set." + std::to_string(b.index) + ".";
    kv(p + "first_epoch", std::to_string(b.first_epoch));
    kv(p + "subset_seed", std::to_string(b.subset_seed));
    kv(p + "split_seed", std::to_string(b.split_seed));
    kv(p + "sizes", std::to_string(b.positives) + " pos, " + std::to_string(b.negatives) + " neg, " + std::to_string(b.train) +
                        "/" + std::to_string(b.dev) + "/" + std::to_string(b.test));
    if (!b.within_relative_tolerance) kv(p + "warning", "imbalance above relative balancing tolerance");
  }
  return out;
}

}  // namespace ocon
