#pragma once

// Raw records -> model-ready feature matrices: F0-ratio normalization,
// per-column scaling and a versioned, checksummed matrix file.
//
// Matrix file, little-endian:
//   "OCONMAT" u8 version(=1)
//   u8 feature_set  u8 label_system  u8 scaling_kind  u8 reserved(0)
//   u64 rows  u64 dim
//   dim x (f64 a, f64 b)          scaling pairs (min,max) or (mean,std)
//   rows*dim f64                  values, row-major
//   rows x i32                    labels
//   rows x u8                     speaker groups
//   u64                           FNV-1a of all preceding bytes

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ocon/binary_io.hpp"
#include "ocon/config.hpp"
#include "ocon/dataset.hpp"
#include "ocon/error.hpp"

namespace ocon {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Ratio vector Fi(t)/F0. Component order: SS features are (F1, F2, F3);
/// SteadyState4 appends F0 itself in Hz; TimeTracks12 is formant-major,
/// time-minor: F1@10, F1@50, F1@SS, F1@80, F2@10, ... F3@80.
/// All ratios divide by the single steady-state F0.
inline std::vector<double> normalize_by_f0(const FeatureRecord& r, FeatureSetKind kind) {
  if (!is_usable(r, kind)) throw Error(Errc::UnusableRecord, r.name + " has a non-positive field for " + std::string(feature_set_name(kind)));
  std::vector<double> out;
  out.reserve(feature_dim(kind));
  if (kind == FeatureSetKind::TimeTracks12) {
    for (const auto& track : r.formants)
      for (double v : track) out.push_back(v / r.f0_ss);
    return out;
  }
  for (int i = 0; i < 3; ++i) out.push_back(r.formant(i, TimePoint::SteadyState) / r.f0_ss);
  if (kind == FeatureSetKind::SteadyState4) out.push_back(r.f0_ss);
  return out;
}

enum class ScalingKind : std::uint8_t { MinMax, ZScore };

/// Per-column scaling parameters. For MinMax, (lo, hi) are (min, max); for
/// ZScore they are (mean, standard deviation).
struct ScalingRecord {
  ScalingKind kind = ScalingKind::MinMax;
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dim() const { return lo.size(); }
  friend bool operator==(const ScalingRecord&, const ScalingRecord&) = default;
};

/// Content hash over the bit patterns, used to tie model members to the
/// scaling they were trained under.
inline std::uint64_t scaling_hash(const ScalingRecord& s) {
  ByteWriter w;
  w.put(static_cast<std::uint8_t>(s.kind));
  w.put_doubles(s.lo);
  w.put_doubles(s.hi);
  return fnv1a64(w.bytes());
}

inline ScalingRecord fit_minmax(const RowMatrix& raw) {
  if (raw.rows() < 2) throw Error(Errc::TooFewSamples, "min-max fit needs at least 2 rows");
  ScalingRecord s;
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    const double lo = raw.col(c).minCoeff();
    const double hi = raw.col(c).maxCoeff();
    if (!(lo < hi)) throw Error(Errc::ConstantColumn, "column " + std::to_string(c));
    s.lo.push_back(lo);
    s.hi.push_back(hi);
  }
  return s;
}

/// Standardization; kept for comparison, not used by default.
inline ScalingRecord fit_zscore(const RowMatrix& raw) {
  if (raw.rows() < 2) throw Error(Errc::TooFewSamples, "z-score fit needs at least 2 rows");
  ScalingRecord s{ScalingKind::ZScore, {}, {}};
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    const double mean = raw.col(c).mean();
    const double sd = std::sqrt((raw.col(c).array() - mean).square().sum() / static_cast<double>(raw.rows()));
    if (!(sd > 0.0)) throw Error(Errc::ConstantColumn, "column " + std::to_string(c));
    s.lo.push_back(mean);
    s.hi.push_back(sd);
  }
  return s;
}

/// Min-max output is clamped to [0, 1] so unseen inputs never fail.
inline std::vector<double> apply_scaling(std::span<const double> x, const ScalingRecord& s) {
  if (x.size() != s.dim())
    throw Error(Errc::DimensionMismatch, "vector has " + std::to_string(x.size()) + " components, scaling has " + std::to_string(s.dim()));
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (s.kind == ScalingKind::MinMax)
      out[i] = std::clamp((x[i] - s.lo[i]) / (s.hi[i] - s.lo[i]), 0.0, 1.0);
    else
      out[i] = (x[i] - s.lo[i]) / s.hi[i];
  }
  return out;
}

inline std::vector<double> apply_minmax(std::span<const double> x, const ScalingRecord& s) {
  if (s.kind != ScalingKind::MinMax) throw Error(Errc::InvalidConfig, "scaling record is not min-max");
  return apply_scaling(x, s);
}

/// Which classes the labels column encodes. Binary is a generic two-class
/// system for synthetic data.
enum class LabelSystem : std::uint8_t { Phoneme, Speaker, Binary };

inline constexpr int kSpeakerClassCount = 3;

/// Speaker classes: male (men), female (women), children (boys and girls).
inline constexpr int speaker_class(SpeakerGroup g) {
  switch (g) {
    case SpeakerGroup::Man: return 0;
    case SpeakerGroup::Woman: return 1;
    case SpeakerGroup::Boy:
    case SpeakerGroup::Girl: return 2;
  }
  return 0;
}

inline std::vector<std::string> class_names(LabelSystem system) {
  if (system == LabelSystem::Speaker) return {"male", "female", "children"};
  if (system == LabelSystem::Binary) return {"class0", "class1"};
  return {kPhonemeCodes.begin(), kPhonemeCodes.end()};
}

inline constexpr int class_count(LabelSystem system) {
  switch (system) {
    case LabelSystem::Speaker: return kSpeakerClassCount;
    case LabelSystem::Binary: return 2;
    default: return kPhonemeCount;
  }
}

inline std::string label_system_name(LabelSystem s) {
  switch (s) {
    case LabelSystem::Speaker: return "speaker";
    case LabelSystem::Binary: return "binary";
    default: return "phoneme";
  }
}

inline LabelSystem label_system_from_name(std::string_view name) {
  if (name == "phoneme") return LabelSystem::Phoneme;
  if (name == "speaker") return LabelSystem::Speaker;
  if (name == "binary") return LabelSystem::Binary;
  throw Error(Errc::InvalidConfig, "unknown label system '" + std::string(name) + "'");
}

struct FeatureMatrix {
  RowMatrix values;
  std::vector<int> labels;
  std::vector<SpeakerGroup> groups;
  ScalingRecord scaling;
  FeatureSetKind feature_set = FeatureSetKind::SteadyState3;
  LabelSystem label_system = LabelSystem::Phoneme;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }
  int num_classes() const { return class_count(label_system); }

  std::vector<double> row(std::size_t i) const {
    const auto r = values.row(static_cast<Eigen::Index>(i));
    return {r.data(), r.data() + r.size()};
  }
};

/// Bitwise equality (NaN payloads and signed zeros included).
inline bool bitwise_equal(const FeatureMatrix& a, const FeatureMatrix& b) {
  auto same_bits = [](std::span<const double> x, std::span<const double> y) {
    return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
  };
  return a.feature_set == b.feature_set && a.label_system == b.label_system && a.values.rows() == b.values.rows() &&
         a.values.cols() == b.values.cols() && same_bits({a.values.data(), static_cast<std::size_t>(a.values.size())},
                                                         {b.values.data(), static_cast<std::size_t>(b.values.size())}) &&
         a.labels == b.labels && a.groups == b.groups && a.scaling.kind == b.scaling.kind &&
         same_bits(a.scaling.lo, b.scaling.lo) && same_bits(a.scaling.hi, b.scaling.hi);
}

inline RowMatrix ratio_matrix(std::span<const FeatureRecord> records, FeatureSetKind kind) {
  RowMatrix raw(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(feature_dim(kind)));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto v = normalize_by_f0(records[i], kind);
    for (std::size_t j = 0; j < v.size(); ++j) raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[j];
  }
  return raw;
}

/// Fits scaling over all given records (no split happens before this point,
/// so dev/test rows share the fit) and returns the scaled matrix.
inline FeatureMatrix build_feature_matrix(std::span<const FeatureRecord> records, FeatureSetKind kind,
                                          LabelSystem system = LabelSystem::Phoneme,
                                          ScalingKind scaling = ScalingKind::MinMax) {
  FeatureMatrix m;
  m.feature_set = kind;
  m.label_system = system;
  const RowMatrix raw = ratio_matrix(records, kind);
  m.scaling = scaling == ScalingKind::MinMax ? fit_minmax(raw) : fit_zscore(raw);
  m.values.resize(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const auto scaled = apply_scaling(std::span<const double>(raw.row(i).data(), static_cast<std::size_t>(raw.cols())), m.scaling);
    for (Eigen::Index j = 0; j < raw.cols(); ++j) m.values(i, j) = scaled[static_cast<std::size_t>(j)];
  }
  for (const auto& r : records) {
    m.labels.push_back(system == LabelSystem::Phoneme ? r.phoneme.id : speaker_class(r.group));
    m.groups.push_back(r.group);
  }
  return m;
}

inline constexpr std::uint8_t kMatrixFormatVersion = 1;
inline constexpr std::string_view kMatrixMagic = "OCONMAT";

inline std::vector<std::uint8_t> serialize_matrix(const FeatureMatrix& m) {
  ByteWriter w;
  for (char c : kMatrixMagic) w.put(static_cast<std::uint8_t>(c));
  w.put(kMatrixFormatVersion);
  w.put(static_cast<std::uint8_t>(m.feature_set));
  w.put(static_cast<std::uint8_t>(m.label_system));
  w.put(static_cast<std::uint8_t>(m.scaling.kind));
  w.put(std::uint8_t{0});
  w.put<std::uint64_t>(m.rows());
  w.put<std::uint64_t>(m.dim());
  for (std::size_t j = 0; j < m.dim(); ++j) {
    w.put(m.scaling.lo.at(j));
    w.put(m.scaling.hi.at(j));
  }
  for (Eigen::Index i = 0; i < m.values.size(); ++i) w.put(m.values.data()[i]);
  for (int label : m.labels) w.put<std::int32_t>(label);
  for (auto g : m.groups) w.put(static_cast<std::uint8_t>(g));
  w.seal();
  return w.bytes();
}

inline FeatureMatrix deserialize_matrix(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  for (char c : kMatrixMagic)
    if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(c)) throw Error(Errc::CorruptPayload, "not a feature matrix file");
  if (const auto version = r.get<std::uint8_t>(); version != kMatrixFormatVersion)
    throw Error(Errc::VersionMismatch, "matrix format version " + std::to_string(version) + ", expected " +
                                           std::to_string(kMatrixFormatVersion));
  r.verify_seal();

  FeatureMatrix m;
  const auto fs = r.get<std::uint8_t>();
  const auto ls = r.get<std::uint8_t>();
  const auto sk = r.get<std::uint8_t>();
  r.get<std::uint8_t>();
  if (fs > 2 || ls > 2 || sk > 1) throw Error(Errc::CorruptPayload, "bad header tags");
  m.feature_set = static_cast<FeatureSetKind>(fs);
  m.label_system = static_cast<LabelSystem>(ls);
  m.scaling.kind = static_cast<ScalingKind>(sk);
  const auto rows = r.get<std::uint64_t>();
  const auto dim = r.get<std::uint64_t>();
  if (dim != feature_dim(m.feature_set)) throw Error(Errc::CorruptPayload, "dimension does not match feature set");
  r.need_items(rows, dim * sizeof(double) + sizeof(std::int32_t) + 1);
  for (std::uint64_t j = 0; j < dim; ++j) {
    m.scaling.lo.push_back(r.get<double>());
    m.scaling.hi.push_back(r.get<double>());
  }
  m.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < m.values.size(); ++i) m.values.data()[i] = r.get<double>();
  m.labels.resize(rows);
  for (auto& label : m.labels) {
    label = r.get<std::int32_t>();
    if (label < 0 || label >= m.num_classes()) throw Error(Errc::CorruptPayload, "label out of range");
  }
  m.groups.resize(rows);
  for (auto& g : m.groups) {
    const auto tag = r.get<std::uint8_t>();
    if (tag > 3) throw Error(Errc::CorruptPayload, "speaker group out of range");
    g = static_cast<SpeakerGroup>(tag);
  }
  if (!r.at_seal()) throw Error(Errc::CorruptPayload, "trailing bytes");
  return m;
}

inline void save_matrix(const FeatureMatrix& m, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_matrix(m));
}

inline FeatureMatrix load_matrix(const std::filesystem::path& path) { return deserialize_matrix(read_file_bytes(path)); }

/// Human-readable sidecar for a processed matrix.
inline std::string matrix_summary(const FeatureMatrix& m) {
  std::string out;
  out += "feature_set = " + std::string(feature_set_name(m.feature_set)) + "\n";
  out += "label_system = " + label_system_name(m.label_system) + "\n";
  out += "scaling = " + std::string(m.scaling.kind == ScalingKind::MinMax ? "minmax" : "zscore") + "\n";
  out += "rows = " + std::to_string(m.rows()) + "\n";
  out += "dim = " + std::to_string(m.dim()) + "\n";
  const auto names = class_names(m.label_system);
  std::vector<std::size_t> counts(names.size(), 0);
  for (int l : m.labels) ++counts[static_cast<std::size_t>(l)];
  for (std::size_t c = 0; c < names.size(); ++c) out += "count." + names[c] + " = " + std::to_string(counts[c]) + "\n";
  for (std::size_t j = 0; j < m.dim(); ++j)
    out += "scaling." + std::to_string(j) + " = " + format_double(m.scaling.lo[j]) + ", " + format_double(m.scaling.hi[j]) + "\n";
  return out;
}

/// 2-D formant projection (F1/F0, F2/F0 at steady state), both unscaled and
/// min-max scaled over the given records, as CSV.
inline std::string projection_csv(std::span<const FeatureRecord> records) {
  const RowMatrix raw = ratio_matrix(records, FeatureSetKind::SteadyState3);
  const ScalingRecord s = fit_minmax(raw);
  std::string out = "name,label,group,f1_f0,f2_f0,f1_f0_scaled,f2_f0_scaled\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const auto scaled = apply_minmax(std::span<const double>(raw.row(row).data(), 3), s);
    out += records[i].name + "," + std::string(records[i].phoneme.code()) + "," + std::string(group_name(records[i].group)) +
           "," + format_double(raw(row, 0)) + "," + format_double(raw(row, 1)) + "," + format_double(scaled[0]) + "," +
           format_double(scaled[1]) + "\n";
  }
  return out;
}

}  // namespace ocon
