#include <gtest/gtest.h>

#include <functional>
#include <set>

#include "ocon/train.hpp"
#include "support.hpp"

using namespace ocon;
using testing_support::separable_matrix;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::IoError;
}

LabeledRows toy_rows(std::size_t pos, std::size_t neg) {
  LabeledRows d;
  for (std::size_t i = 0; i < pos + neg; ++i) {
    d.rows.push_back(1000 + i);
    d.targets.push_back(i < pos ? 1 : 0);
  }
  return d;
}

MlpConfig small_mlp() {
  MlpConfig c;
  c.input_dim = 2;
  c.hidden = {16};
  c.learning_rate = 1e-2;
  c.batch_size = 32;
  return c;
}

TrainConfig quick_train() {
  TrainConfig t;
  t.epochs_per_batch_set = 150;
  t.max_batch_sets = 3;
  t.seed = 17;
  return t;
}

}  // namespace

TEST(Split, AeSubsetSizes) {
  const auto s = split_dataset(toy_rows(134, 132), SplitFractions{}, 1);
  EXPECT_EQ(s.train.size(), 186u);
  EXPECT_EQ(s.dev.size(), 40u);
  EXPECT_EQ(s.test.size(), 40u);
}

TEST(Split, TenSamples) {
  const auto s = split_dataset(toy_rows(5, 5), SplitFractions{0.8, 0.1, 0.1}, 2);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.dev.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(Split, TooFewSamples) {
  EXPECT_EQ(code_of([] { split_dataset(toy_rows(1, 1), SplitFractions{}, 3); }), Errc::TooFewSamples);
}

TEST(SplitProperty, DisjointCoveringAndStratified) {
  Rng gen(5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t pos = 10 + gen.below(200);
    const std::size_t neg = pos + gen.below(7) - 3;
    const auto data = toy_rows(pos, neg);
    const auto s = split_dataset(data, SplitFractions{}, gen.next());
    std::set<std::size_t> all;
    for (const auto* part : {&s.train, &s.dev, &s.test}) {
      for (auto r : part->rows) ASSERT_TRUE(all.insert(r).second);
      // Positive share within one sample of the proportional share.
      const double share = static_cast<double>(part->size()) * static_cast<double>(pos) / static_cast<double>(pos + neg);
      ASSERT_LE(std::abs(static_cast<double>(part->positives()) - share), 1.0);
      for (std::size_t i = 0; i < part->size(); ++i) ASSERT_EQ(part->targets[i], part->rows[i] < 1000 + pos ? 1 : 0);
    }
    ASSERT_EQ(all.size(), data.size());
    const double n = static_cast<double>(data.size());
    ASSERT_LE(std::abs(static_cast<double>(s.train.size()) - 0.7 * n), 1.0);
    ASSERT_LE(std::abs(static_cast<double>(s.dev.size()) - 0.15 * n), 1.0);
  }
}

TEST(Folds, SizesAndCoverage) {
  const auto data = toy_rows(50, 47);
  const auto folds = make_folds(data, 3, 9);
  std::set<std::size_t> all;
  std::size_t lo = SIZE_MAX, hi = 0;
  for (const auto& f : folds) {
    lo = std::min(lo, f.size());
    hi = std::max(hi, f.size());
    for (auto r : f.rows) EXPECT_TRUE(all.insert(r).second);
  }
  EXPECT_EQ(all.size(), data.size());
  EXPECT_LE(hi - lo, 1u);
  EXPECT_EQ(code_of([&] { make_folds(data, 1, 1); }), Errc::TooFewSamples);
  EXPECT_EQ(code_of([&] { make_folds(toy_rows(2, 2), 5, 1); }), Errc::TooFewSamples);
}

TEST(KFold, LeaveOneOutOnTwelveSamples) {
  const auto m = separable_matrix(6, 3);
  auto t = quick_train();
  t.epochs_per_batch_set = 5;
  t.max_batch_sets = 1;
  const auto r = k_fold_evaluate(m, 0, small_mlp(), t, 12);
  EXPECT_EQ(r.reports.size(), 12u);
  EXPECT_GE(r.mean_accuracy, 0.0);
  EXPECT_LE(r.mean_accuracy, 100.0);
  for (const auto& rep : r.reports) EXPECT_EQ(rep.batch_sets[0].test, 1u);
}

TEST(TrainOneClass, SeparableDataStopsEarlyWithPerfectTest) {
  const auto m = separable_matrix(100, 4);
  const auto out = train_one_class(m, 0, small_mlp(), quick_train());
  EXPECT_EQ(out.report.stop, StopReason::EarlyStop);
  EXPECT_EQ(out.report.test_accuracy, 100.0);
  EXPECT_LT(out.report.final_rolling_loss, 0.15);
  EXPECT_GE(out.report.held_out_accuracy, 95.0);
}

TEST(TrainOneClass, UnreachableAccuracyExhaustsBudget) {
  const auto m = separable_matrix(40, 5);
  auto t = quick_train();
  t.epochs_per_batch_set = 10;
  t.max_batch_sets = 2;
  t.early_stop.accuracy_threshold = 101.0;
  const auto out = train_one_class(m, 1, small_mlp(), t);
  EXPECT_EQ(out.report.stop, StopReason::ExhaustedBudget);
  EXPECT_EQ(out.report.epochs, 20u);
}

TEST(TrainOneClass, DeterministicPerSeed) {
  const auto m = separable_matrix(40, 6);
  auto t = quick_train();
  t.epochs_per_batch_set = 20;
  auto mlp = small_mlp();
  mlp.keep_hidden = 0.5;
  mlp.batch_norm = true;
  const auto a = train_one_class(m, 0, mlp, t);
  const auto b = train_one_class(m, 0, mlp, t);
  EXPECT_EQ(format_train_report(a.report, "class0", false), format_train_report(b.report, "class0", false));
  EXPECT_EQ(serialize_model(a.model), serialize_model(b.model));
  t.seed = 18;
  const auto c = train_one_class(m, 0, mlp, t);
  EXPECT_NE(serialize_model(a.model), serialize_model(c.model));
}

TEST(TrainOneClass, StricterLossThresholdNeverStopsEarlier) {
  const auto m = separable_matrix(60, 7);
  auto t = quick_train();
  t.early_stop.accuracy_threshold = 90.0;
  std::size_t prev = 0;
  for (double threshold : {0.6, 0.4, 0.3, 0.2, 0.1, 0.05}) {
    t.early_stop.loss_threshold = threshold;
    const auto r = train_one_class(m, 0, small_mlp(), t).report;
    EXPECT_GE(r.epochs, prev) << threshold;
    prev = r.epochs;
  }
}

TEST(TrainOneClass, BatchSetBoundariesMatchReencoding) {
  const auto m = separable_matrix(30, 8);
  auto t = quick_train();
  t.early_stop.loss_threshold = 0.0;
  t.epochs_per_batch_set = 5;
  t.max_batch_sets = 4;
  const auto r = train_one_class(m, 0, small_mlp(), t).report;
  ASSERT_EQ(r.batch_sets.size(), 4u);
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(r.batch_sets[i].first_epoch, 5 * i);
    seeds.insert(r.batch_sets[i].subset_seed);
  }
  EXPECT_EQ(seeds.size(), 4u);
  EXPECT_EQ(r.loss_curve.size(), 20u);
  EXPECT_EQ(r.epochs, 20u);

  t.reencode_each_batch_set = false;
  const auto once = train_one_class(m, 0, small_mlp(), t).report;
  EXPECT_EQ(once.batch_sets.size(), 1u);
  EXPECT_EQ(once.epochs, 20u);
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  t.split = {0.5, 0.2, 0.2};
  EXPECT_EQ(code_of([&] { t.validate(); }), Errc::InvalidConfig);
  t = TrainConfig{};
  t.k_folds = 1;
  EXPECT_EQ(code_of([&] { t.validate(); }), Errc::InvalidConfig);
}

TEST(TrainReport, TimingOnlyWhenRequested) {
  TrainReport r;
  r.seconds = 1.5;
  EXPECT_NE(format_train_report(r, "ae").find("seconds = 1.5"), std::string::npos);
  EXPECT_EQ(format_train_report(r, "ae", false).find("seconds"), std::string::npos);
}
