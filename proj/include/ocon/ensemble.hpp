#pragma once

// The one-class-one-network ensemble: K independently trained binary members
// sharing one topology and one scaling record. Inference runs every member
// and picks the first maximum of the probability vector.
//
// Directory layout (format_version 1):
//   manifest.txt                 key = value, see save_ensemble
//   scaling.bin                  "OCONSCL" u8 version, u8 kind, lo[], hi[], checksum
//   member_<ii>_<class>.ckpt     one checkpoint per class (see mlp.hpp)

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ocon/binary_io.hpp"
#include "ocon/config.hpp"
#include "ocon/error.hpp"
#include "ocon/features.hpp"
#include "ocon/mlp.hpp"
#include "ocon/parallel.hpp"
#include "ocon/rng.hpp"
#include "ocon/train.hpp"

namespace ocon {

struct OconModel {
  std::vector<std::string> classes;
  std::vector<MlpModel> members;  // aligned with classes
  ScalingRecord scaling;
  FeatureSetKind feature_set = FeatureSetKind::SteadyState3;
  LabelSystem label_system = LabelSystem::Phoneme;

  std::size_t size() const { return members.size(); }

  /// Rejects member/class count mismatch, differing topologies, wrong input
  /// dimension and members trained under a different scaling record.
  void validate() const {
    if (members.size() != classes.size() || members.empty())
      throw Error(Errc::ManifestMismatch, std::to_string(members.size()) + " members for " + std::to_string(classes.size()) + " classes");
    const auto expected_hash = scaling_hash(scaling);
    const auto& first = members.front().config;
    for (std::size_t c = 0; c < members.size(); ++c) {
      const auto& cfg = members[c].config;
      if (cfg.input_dim != feature_dim(feature_set) || cfg.hidden != first.hidden || cfg.batch_norm != first.batch_norm)
        throw Error(Errc::ManifestMismatch, "member '" + classes[c] + "' topology differs");
      if (members[c].scaling_hash != expected_hash)
        throw Error(Errc::ManifestMismatch, "member '" + classes[c] + "' was trained under a different scaling");
    }
  }
};

/// Lowest index among equal maxima.
inline std::size_t argmax_first(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::DimensionMismatch, "empty logit vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

struct Inference {
  std::vector<double> probabilities;
  std::size_t predicted = 0;
};

/// `scaled` = the vector is already in model space; otherwise the shared
/// scaling is applied (clamped).
inline Inference infer(const OconModel& model, std::span<const double> features, bool scaled = false) {
  if (features.size() != feature_dim(model.feature_set))
    throw Error(Errc::DimensionMismatch, "input has " + std::to_string(features.size()) + " features, model expects " +
                                             std::to_string(feature_dim(model.feature_set)));
  std::vector<double> x = scaled ? std::vector<double>(features.begin(), features.end()) : apply_scaling(features, model.scaling);
  const Eigen::MatrixXd batch = Eigen::Map<const Eigen::RowVectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  Inference out;
  for (const auto& member : model.members) out.probabilities.push_back(predict(member.params, member.config, batch)(0));
  out.predicted = argmax_first(out.probabilities);
  return out;
}

/// N x K inference-mode probabilities for every (already scaled) matrix row.
inline Eigen::MatrixXd ensemble_scores(const OconModel& model, const FeatureMatrix& m) {
  if (m.dim() != feature_dim(model.feature_set) || m.feature_set != model.feature_set)
    throw Error(Errc::DimensionMismatch, "matrix feature set does not match the model");
  if (!(m.scaling == model.scaling)) throw Error(Errc::ManifestMismatch, "matrix was scaled differently from the model");
  const Eigen::MatrixXd x = m.values;
  Eigen::MatrixXd scores(x.rows(), static_cast<Eigen::Index>(model.size()));
  for (std::size_t c = 0; c < model.size(); ++c)
    scores.col(static_cast<Eigen::Index>(c)) = predict(model.members[c].params, model.members[c].config, x);
  return scores;
}

struct EnsembleTraining {
  OconModel model;
  std::vector<TrainReport> reports;  // aligned with classes
  std::vector<std::size_t> diverged;
};

/// Throws PartialEnsemble when any member diverged.
inline const OconModel& require_complete(const EnsembleTraining& t) {
  if (!t.diverged.empty()) {
    std::string names;
    for (auto c : t.diverged) names += (names.empty() ? "" : ", ") + t.model.classes[c];
    throw Error(Errc::PartialEnsemble, "diverged members: " + names);
  }
  return t.model;
}

/// Seed of member c: derived from the master seed and the class id only, so
/// the worker count never changes results.
inline std::uint64_t member_seed(std::uint64_t master, std::size_t class_id) {
  return derive_seed(master, Stream::Member, class_id);
}

inline TrainOutcome train_member(const FeatureMatrix& m, std::size_t class_id, const MlpConfig& mlp, TrainConfig train) {
  train.seed = member_seed(train.seed, class_id);
  return train_one_class(m, static_cast<int>(class_id), mlp, train);
}

/// `train.seed` is the master seed.
inline EnsembleTraining train_ensemble(const FeatureMatrix& m, const MlpConfig& mlp, const TrainConfig& train,
                                       std::size_t workers = 1) {
  const auto k = static_cast<std::size_t>(m.num_classes());
  EnsembleTraining out;
  out.model.classes = class_names(m.label_system);
  out.model.scaling = m.scaling;
  out.model.feature_set = m.feature_set;
  out.model.label_system = m.label_system;
  out.model.members.resize(k);
  out.reports.resize(k);
  parallel_for(k, workers, [&](std::size_t c) {
    auto outcome = train_member(m, c, mlp, train);
    outcome.model.manifest_hash = hex64(fnv1a64(format_train_report(outcome.report, out.model.classes[c], false)));
    out.model.members[c] = std::move(outcome.model);
    out.reports[c] = std::move(outcome.report);
  });
  for (std::size_t c = 0; c < k; ++c)
    if (out.reports[c].stop == StopReason::Diverged) out.diverged.push_back(c);
  return out;
}

/// Retrains one member in place; the others are untouched.
inline TrainReport retrain_member(OconModel& model, const FeatureMatrix& m, std::size_t class_id, const MlpConfig& mlp,
                                  const TrainConfig& train) {
  if (class_id >= model.size()) throw Error(Errc::UnknownClass, "class " + std::to_string(class_id));
  if (!(m.scaling == model.scaling)) throw Error(Errc::ManifestMismatch, "matrix was scaled differently from the model");
  auto outcome = train_member(m, class_id, mlp, train);
  if (outcome.report.stop == StopReason::Diverged) throw Error(Errc::PartialEnsemble, "retrained member diverged: " + outcome.report.diagnostics);
  outcome.model.manifest_hash = hex64(fnv1a64(format_train_report(outcome.report, model.classes[class_id], false)));
  model.members[class_id] = std::move(outcome.model);
  return outcome.report;
}

struct EnsembleEvaluation {
  std::vector<double> member_accuracy;  // percent, one-vs-rest at 0.5 over all rows
  double mean_member_accuracy = 0.0;
  double argmax_accuracy = 0.0;  // percent
  std::vector<std::vector<std::uint64_t>> confusion;  // [truth][predicted]
  Eigen::MatrixXd scores;  // N x K
};

inline EnsembleEvaluation evaluate_ensemble(const OconModel& model, const FeatureMatrix& m) {
  if (m.rows() == 0) throw Error(Errc::EmptyEvaluationSet, "matrix has no rows");
  const auto k = model.size();
  EnsembleEvaluation ev;
  ev.scores = ensemble_scores(model, m);
  ev.confusion.assign(k, std::vector<std::uint64_t>(k, 0));
  std::vector<std::size_t> member_correct(k, 0);
  std::size_t argmax_correct = 0;
  for (Eigen::Index i = 0; i < ev.scores.rows(); ++i) {
    const auto truth = static_cast<std::size_t>(m.labels[static_cast<std::size_t>(i)]);
    const Eigen::RowVectorXd row = ev.scores.row(i);
    const auto predicted = argmax_first({row.data(), k});
    ++ev.confusion[truth][predicted];
    argmax_correct += predicted == truth;
    for (std::size_t c = 0; c < k; ++c) member_correct[c] += (row(static_cast<Eigen::Index>(c)) > kDecisionThreshold) == (truth == c);
  }
  const double n = static_cast<double>(m.rows());
  for (auto correct : member_correct) ev.member_accuracy.push_back(100.0 * static_cast<double>(correct) / n);
  for (double a : ev.member_accuracy) ev.mean_member_accuracy += a / static_cast<double>(k);
  ev.argmax_accuracy = 100.0 * static_cast<double>(argmax_correct) / n;
  return ev;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int kEnsembleFormatVersion = 1;
inline constexpr std::string_view kScalingMagic = "OCONSCL";

inline std::vector<std::uint8_t> serialize_scaling(const ScalingRecord& s) {
  ByteWriter w;
  for (char ch : kScalingMagic) w.put(static_cast<std::uint8_t>(ch));
  w.put(std::uint8_t{1});
  w.put(static_cast<std::uint8_t>(s.kind));
  w.put_doubles(s.lo);
  w.put_doubles(s.hi);
  w.seal();
  return w.bytes();
}

inline ScalingRecord deserialize_scaling(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  for (char ch : kScalingMagic)
    if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(ch)) throw Error(Errc::CorruptPayload, "not a scaling file");
  if (r.get<std::uint8_t>() != 1) throw Error(Errc::VersionMismatch, "scaling file version");
  r.verify_seal();
  ScalingRecord s;
  const auto kind = r.get<std::uint8_t>();
  if (kind > 1) throw Error(Errc::CorruptPayload, "scaling kind");
  s.kind = static_cast<ScalingKind>(kind);
  s.lo = r.get_doubles();
  s.hi = r.get_doubles();
  if (s.lo.size() != s.hi.size() || !r.at_seal()) throw Error(Errc::CorruptPayload, "scaling payload");
  return s;
}

inline std::string member_filename(std::size_t index, const std::string& class_name) {
  std::string idx = std::to_string(index);
  if (idx.size() < 2) idx.insert(0, 2 - idx.size(), '0');
  return "member_" + idx + "_" + class_name + ".ckpt";
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << text;
}

inline void write_manifest(const std::filesystem::path& dir, const OconModel& model, const std::vector<std::string>& member_hashes) {
  KeyValueConfig manifest;
  manifest.assign("format_version", std::to_string(kEnsembleFormatVersion));
  manifest.assign("feature_set", std::string(feature_set_name(model.feature_set)));
  manifest.assign("label_system", label_system_name(model.label_system));
  std::string classes;
  for (const auto& c : model.classes) classes += (classes.empty() ? "" : ", ") + c;
  manifest.assign("classes", classes);
  manifest.assign("scaling", "scaling.bin " + file_hash(dir / "scaling.bin"));
  manifest.assign("scaling_hash", hex64(scaling_hash(model.scaling)));
  for (std::size_t c = 0; c < model.size(); ++c)
    manifest.assign("member." + model.classes[c], member_filename(c, model.classes[c]) + " " + member_hashes[c]);
  write_text(dir / "manifest.txt", manifest.to_string());
}

}  // namespace detail

inline void save_ensemble(const OconModel& model, const std::filesystem::path& dir) {
  model.validate();
  std::filesystem::create_directories(dir);
  write_file_bytes(dir / "scaling.bin", serialize_scaling(model.scaling));
  std::vector<std::string> hashes;
  for (std::size_t c = 0; c < model.size(); ++c) {
    const auto bytes = serialize_model(model.members[c]);
    write_file_bytes(dir / member_filename(c, model.classes[c]), bytes);
    hashes.push_back(hex64(fnv1a64(bytes)));
  }
  detail::write_manifest(dir, model, hashes);
}

/// Member file hash as recorded in the manifest.
inline std::string recorded_member_hash(const std::filesystem::path& dir, const std::string& class_name) {
  const auto manifest = KeyValueConfig::load(dir / "manifest.txt");
  const auto entry = manifest.get("member." + class_name);
  if (!entry) throw Error(Errc::MissingMember, class_name);
  const auto parts = split_list(*entry, ' ');
  if (parts.size() != 2) throw Error(Errc::ManifestMismatch, "member entry for " + class_name);
  return parts[1];
}

inline OconModel load_ensemble(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.txt")) throw Error(Errc::IoError, "no manifest.txt in " + dir.string());
  const auto manifest = KeyValueConfig::load(dir / "manifest.txt");
  auto require = [&](const std::string& key) {
    const auto v = manifest.get(key);
    if (!v) throw Error(Errc::ManifestMismatch, "manifest lacks '" + key + "'");
    return *v;
  };
  if (parse_int(require("format_version")) != kEnsembleFormatVersion)
    throw Error(Errc::VersionMismatch, "ensemble format version " + require("format_version"));

  OconModel model;
  model.feature_set = feature_set_from_name(require("feature_set"));
  model.label_system = label_system_from_name(require("label_system"));
  model.classes = split_list(require("classes"));
  if (model.classes != class_names(model.label_system)) throw Error(Errc::ManifestMismatch, "class table does not match label system");

  auto verified_bytes = [&](const std::string& entry, const std::string& what, Errc missing) {
    const auto parts = split_list(entry, ' ');
    if (parts.size() != 2) throw Error(Errc::ManifestMismatch, "entry for " + what);
    const auto path = dir / parts[0];
    if (!std::filesystem::exists(path)) throw Error(missing, what);
    auto bytes = read_file_bytes(path);
    if (hex64(fnv1a64(bytes)) != parts[1]) throw Error(Errc::ManifestMismatch, what + " does not match its recorded hash");
    return bytes;
  };
  model.scaling = deserialize_scaling(verified_bytes(require("scaling"), "scaling.bin", Errc::ManifestMismatch));
  if (hex64(scaling_hash(model.scaling)) != require("scaling_hash")) throw Error(Errc::ManifestMismatch, "scaling hash");
  for (const auto& name : model.classes) {
    const auto entry = manifest.get("member." + name);
    if (!entry) throw Error(Errc::MissingMember, name);
    model.members.push_back(deserialize_model(verified_bytes(*entry, name, Errc::MissingMember)));
  }
  model.validate();
  return model;
}

/// Writes a replacement checkpoint for one class and records its new hash in
/// the manifest; other member files are not touched.
inline void replace_member(const std::filesystem::path& dir, std::size_t class_id, const MlpModel& member) {
  auto model = load_ensemble(dir);
  if (class_id >= model.size()) throw Error(Errc::UnknownClass, "class " + std::to_string(class_id));
  model.members[class_id] = member;
  model.validate();
  std::vector<std::string> hashes;
  for (std::size_t c = 0; c < model.size(); ++c) {
    if (c == class_id) {
      const auto bytes = serialize_model(member);
      write_file_bytes(dir / member_filename(c, model.classes[c]), bytes);
      hashes.push_back(hex64(fnv1a64(bytes)));
    } else {
      hashes.push_back(recorded_member_hash(dir, model.classes[c]));
    }
  }
  detail::write_manifest(dir, model, hashes);
}

}  // namespace ocon
