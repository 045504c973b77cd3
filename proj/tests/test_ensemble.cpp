#include <gtest/gtest.h>

#include <functional>
#include <set>

#include "ocon/ensemble.hpp"
#include "ocon/report.hpp"
#include "support.hpp"

using namespace ocon;
using testing_support::read_file;
using testing_support::synthetic_records;
using testing_support::TempDir;

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

MlpConfig tiny_mlp() {
  MlpConfig c;
  c.hidden = {8};
  c.learning_rate = 1e-2;
  c.batch_size = 16;
  return c;
}

TrainConfig tiny_train(std::uint64_t seed = 1) {
  TrainConfig t;
  t.epochs_per_batch_set = 5;
  t.max_batch_sets = 1;
  t.early_stop.loss_threshold = 0.0;
  t.seed = seed;
  return t;
}

const FeatureMatrix& phoneme_matrix() {
  static const FeatureMatrix m = build_feature_matrix(synthetic_records(4, 50), FeatureSetKind::SteadyState3);
  return m;
}

const EnsembleTraining& phoneme_ensemble() {
  static const EnsembleTraining t = train_ensemble(phoneme_matrix(), tiny_mlp(), tiny_train(), 2);
  return t;
}

}  // namespace

TEST(Argmax, LowestIndexWinsTies) {
  EXPECT_EQ(argmax_first(std::vector<double>{0.2, 0.9, 0.9}), 1u);
  EXPECT_EQ(argmax_first(std::vector<double>(12, 0.5)), 0u);
  EXPECT_EQ(code_of([] { argmax_first(std::vector<double>{}); }), Errc::DimensionMismatch);
}

TEST(ArgmaxProperty, InvariantUnderIncreasingAffineMaps) {
  Rng gen(4);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> v(2 + gen.below(12));
    for (auto& x : v) x = static_cast<double>(gen.below(10)) / 10.0;
    const double a = 0.1 + 5 * gen.uniform();
    const double b = gen.uniform() - 0.5;
    auto w = v;
    for (auto& x : w) x = a * x + b;
    ASSERT_EQ(argmax_first(v), argmax_first(w));
  }
}

TEST(Ensemble, OneMemberPerClassWithDistinctSeeds) {
  const auto& t = phoneme_ensemble();
  ASSERT_EQ(t.model.size(), 12u);
  EXPECT_TRUE(t.diverged.empty());
  EXPECT_EQ(t.model.classes[4], "er");
  std::set<std::uint64_t> seeds;
  for (const auto& m : t.model.members) seeds.insert(m.config.seed);
  EXPECT_EQ(seeds.size(), 12u);
  EXPECT_NO_THROW(t.model.validate());
  EXPECT_NO_THROW(require_complete(t));
}

TEST(Ensemble, WorkerCountDoesNotChangeMembers) {
  const auto one = train_ensemble(phoneme_matrix(), tiny_mlp(), tiny_train(), 1);
  const auto& two = phoneme_ensemble();
  for (std::size_t c = 0; c < 12; ++c) EXPECT_EQ(serialize_model(one.model.members[c]), serialize_model(two.model.members[c]));
}

TEST(Ensemble, SpeakerRunHasThreeMembers) {
  const auto m = build_feature_matrix(synthetic_records(2, 51), FeatureSetKind::SteadyState3, LabelSystem::Speaker);
  const auto t = train_ensemble(m, tiny_mlp(), tiny_train(), 3);
  EXPECT_EQ(t.model.size(), 3u);
  EXPECT_EQ(t.model.classes, (std::vector<std::string>{"male", "female", "children"}));
}

TEST(Ensemble, PartialEnsembleReported) {
  auto t = phoneme_ensemble();
  t.diverged = {3};
  EXPECT_EQ(code_of([&] { require_complete(t); }), Errc::PartialEnsemble);
}

TEST(Infer, AllHalfVectorGivesTwelveProbabilities) {
  const auto& model = phoneme_ensemble().model;
  const std::vector<double> x(3, 0.5);
  const auto a = infer(model, x, true);
  ASSERT_EQ(a.probabilities.size(), 12u);
  for (double p : a.probabilities) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
  EXPECT_EQ(a.predicted, argmax_first(a.probabilities));
  const auto b = infer(model, x, true);
  EXPECT_EQ(a.probabilities, b.probabilities);
  EXPECT_EQ(code_of([&] { infer(model, std::vector<double>(12, 0.5)); }), Errc::DimensionMismatch);
}

TEST(Infer, RawInputIsScaledWithSharedRecord) {
  const auto& model = phoneme_ensemble().model;
  const std::vector<double> raw = {4.0, 12.0, 20.0};
  const auto scaled = apply_scaling(raw, model.scaling);
  EXPECT_EQ(infer(model, raw).probabilities, infer(model, scaled, true).probabilities);
}

TEST(Ensemble, ScoresRejectForeignScaling) {
  const auto& model = phoneme_ensemble().model;
  auto other = phoneme_matrix();
  other.scaling.hi[0] += 1.0;
  EXPECT_EQ(code_of([&] { ensemble_scores(model, other); }), Errc::ManifestMismatch);
}

TEST(Persistence, SaveLoadIsBitwise) {
  TempDir dir;
  const auto& model = phoneme_ensemble().model;
  save_ensemble(model, dir.path());
  const auto back = load_ensemble(dir.path());
  ASSERT_EQ(back.size(), model.size());
  EXPECT_EQ(back.classes, model.classes);
  EXPECT_TRUE(back.scaling == model.scaling);
  for (std::size_t c = 0; c < model.size(); ++c) EXPECT_EQ(serialize_model(back.members[c]), serialize_model(model.members[c]));
  EXPECT_TRUE(ensemble_scores(back, phoneme_matrix()) == ensemble_scores(model, phoneme_matrix()));
}

TEST(Persistence, MissingTamperedAndFutureVersion) {
  const auto& model = phoneme_ensemble().model;
  {
    TempDir dir;
    save_ensemble(model, dir.path());
    std::filesystem::remove(dir / member_filename(7, "iy"));
    EXPECT_EQ(code_of([&] { load_ensemble(dir.path()); }), Errc::MissingMember);
  }
  {
    TempDir dir;
    save_ensemble(model, dir.path());
    auto bytes = read_file_bytes(dir / member_filename(2, "aw"));
    bytes[bytes.size() / 2] ^= 1;
    write_file_bytes(dir / member_filename(2, "aw"), bytes);
    EXPECT_EQ(code_of([&] { load_ensemble(dir.path()); }), Errc::ManifestMismatch);
  }
  {
    TempDir dir;
    save_ensemble(model, dir.path());
    auto text = read_file(dir / "manifest.txt");
    text.replace(text.find("format_version = 1"), 18, "format_version = 2");
    testing_support::write_file(dir / "manifest.txt", text);
    EXPECT_EQ(code_of([&] { load_ensemble(dir.path()); }), Errc::VersionMismatch);
  }
}

TEST(Persistence, RetrainingOneMemberLeavesOthersUntouched) {
  TempDir dir;
  auto model = phoneme_ensemble().model;
  save_ensemble(model, dir.path());
  std::vector<std::string> before;
  for (std::size_t c = 0; c < 12; ++c) before.push_back(read_file(dir / member_filename(c, model.classes[c])));
  const auto old_hash = recorded_member_hash(dir.path(), "eh");

  retrain_member(model, phoneme_matrix(), 3, tiny_mlp(), tiny_train(99));
  replace_member(dir.path(), 3, model.members[3]);
  for (std::size_t c = 0; c < 12; ++c) {
    const auto now = read_file(dir / member_filename(c, model.classes[c]));
    if (c == 3) EXPECT_NE(now, before[c]);
    else EXPECT_EQ(now, before[c]) << model.classes[c];
  }
  EXPECT_NE(recorded_member_hash(dir.path(), "eh"), old_hash);
  EXPECT_NO_THROW(load_ensemble(dir.path()));

  // Retraining with the original master seed reproduces the original bytes.
  retrain_member(model, phoneme_matrix(), 3, tiny_mlp(), tiny_train());
  EXPECT_EQ(serialize_model(model.members[3]), serialize_model(phoneme_ensemble().model.members[3]));
}

TEST(Evaluation, AccuraciesAndConfusionAreConsistent) {
  const auto& model = phoneme_ensemble().model;
  const auto ev = evaluate_ensemble(model, phoneme_matrix());
  std::uint64_t total = 0, diagonal = 0;
  for (std::size_t t = 0; t < 12; ++t)
    for (std::size_t p = 0; p < 12; ++p) {
      total += ev.confusion[t][p];
      if (t == p) diagonal += ev.confusion[t][p];
    }
  EXPECT_EQ(total, phoneme_matrix().rows());
  EXPECT_DOUBLE_EQ(ev.argmax_accuracy, 100.0 * static_cast<double>(diagonal) / static_cast<double>(total));
}

TEST(Report, TablesAndFiles) {
  TempDir dir;
  const auto& model = phoneme_ensemble().model;
  const auto r = build_report(model, phoneme_matrix());
  ASSERT_EQ(r.classes.size(), 12u);
  for (const auto& c : r.classes) {
    EXPECT_EQ(c.counts.total(), phoneme_matrix().rows());
    EXPECT_GE(c.roc.auc, 0.0);
    EXPECT_LE(c.roc.auc, 1.0);
  }
  const auto paths = write_report(r, dir.path());
  EXPECT_EQ(paths.size(), 4u + 12u);
  const auto acc = read_file(dir / "accuracy.csv");
  EXPECT_EQ(acc.substr(0, acc.find('\n')), "class,accuracy_pct");
  EXPECT_NE(acc.find("\nOCON,"), std::string::npos);
  const auto det = read_file(dir / "det.csv");
  EXPECT_EQ(det.substr(0, det.find('\n')), "class,tp,fp,tn,fn,er,fdr,for,npv,auc");
  EXPECT_NE(read_file(dir / "report.txt").find("AUC"), std::string::npos);
}

TEST(Report, SingleClassSetHasUndefinedAuc) {
  const auto& m = phoneme_matrix();
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < m.rows(); ++i)
    if (m.labels[i] == 0) rows.push_back(i);
  const auto r = build_report(phoneme_ensemble().model, select_rows(m, rows));
  for (const auto& c : r.classes) {
    EXPECT_TRUE(std::isnan(c.roc.auc));
    EXPECT_TRUE(c.roc.points.empty());
  }
  EXPECT_NE(format_report(r).find("n/a"), std::string::npos);
}

TEST(Report, EmptyEvaluationSet) {
  const auto empty = select_rows(phoneme_matrix(), std::vector<std::size_t>{});
  EXPECT_EQ(code_of([&] { build_report(phoneme_ensemble().model, empty); }), Errc::EmptyEvaluationSet);
}

TEST(ScalingFile, RoundTrip) {
  const auto& s = phoneme_matrix().scaling;
  EXPECT_TRUE(deserialize_scaling(serialize_scaling(s)) == s);
  auto bytes = serialize_scaling(s);
  bytes.pop_back();
  EXPECT_EQ(code_of([&] { deserialize_scaling(bytes); }), Errc::CorruptPayload);
}
