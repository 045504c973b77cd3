#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "ocon/dataset.hpp"
#include "ocon/features.hpp"
#include "ocon/rng.hpp"

namespace testing_support {

namespace fs = std::filesystem;

// Rough adult-male vowel formant means (F1, F2, F3 in Hz), label order.
inline constexpr std::array<std::array<double, 3>, 12> kMaleFormants = {{
    {588, 1952, 2601}, {768, 1333, 2522}, {652, 997, 2538}, {580, 1799, 2605},
    {474, 1379, 1710}, {476, 2089, 2691}, {427, 2034, 2684}, {342, 2322, 3000},
    {497, 910, 2459},  {469, 1122, 2434}, {623, 1200, 2550}, {378, 997, 2343},
}};

// Man, Boy, Woman, Girl.
inline constexpr std::array<double, 4> kGroupF0 = {130, 235, 220, 245};
inline constexpr std::array<double, 4> kGroupScale = {1.0, 1.25, 1.17, 1.3};

/// Synthetic HGCW-like records: `per_cell` speakers for each (phoneme,
/// group), multiplicative gaussian noise, formants drifting over time.
inline std::vector<ocon::FeatureRecord> synthetic_records(int per_cell, std::uint64_t seed, double noise = 0.03) {
  ocon::Rng rng(seed);
  std::vector<ocon::FeatureRecord> out;
  for (int p = 0; p < ocon::kPhonemeCount; ++p) {
    for (std::size_t g = 0; g < 4; ++g) {
      for (int s = 1; s <= per_cell; ++s) {
        ocon::FeatureRecord r;
        r.group = ocon::kSpeakerGroups[g];
        r.speaker_no = s;
        r.phoneme = {p};
        r.name = ocon::encode_filename(r.group, s, r.phoneme);
        r.f0_ss = kGroupF0[g] * (1.0 + noise * rng.normal());
        const double drift = 0.02 * (p % 5) - 0.04;
        for (int i = 0; i < 3; ++i) {
          const double ss = kMaleFormants[static_cast<std::size_t>(p)][static_cast<std::size_t>(i)] * kGroupScale[g] * (1.0 + noise * rng.normal());
          auto& track = r.formants[static_cast<std::size_t>(i)];
          track[static_cast<std::size_t>(ocon::TimePoint::P10)] = ss * (1.0 + drift) * (1.0 + 0.5 * noise * rng.normal());
          track[static_cast<std::size_t>(ocon::TimePoint::P50)] = ss * (1.0 + 0.5 * noise * rng.normal());
          track[static_cast<std::size_t>(ocon::TimePoint::SteadyState)] = ss;
          track[static_cast<std::size_t>(ocon::TimePoint::P80)] = ss * (1.0 - drift) * (1.0 + 0.5 * noise * rng.normal());
        }
        out.push_back(r);
      }
    }
  }
  return out;
}

/// Rows in the default HGCW column layout: name dur f0 F1 F2 F3 F4 then
/// F1-F3 at 10%, 50%, 80%.
inline std::string hgcw_table(const std::vector<ocon::FeatureRecord>& records) {
  std::ostringstream out;
  out << "Synthetic vowel table\nfilename dur f0 F1 F2 F3 F4 F1-1 F2-1 F3-1 F1-2 F2-2 F3-2 F1-3 F2-3 F3-3\n";
  using ocon::TimePoint;
  for (const auto& r : records) {
    out << r.name << " 250 " << r.f0_ss;
    for (int i = 0; i < 3; ++i) out << " " << r.formant(i, TimePoint::SteadyState);
    out << " 3500";
    for (auto t : {TimePoint::P10, TimePoint::P50, TimePoint::P80})
      for (int i = 0; i < 3; ++i) out << " " << r.formant(i, t);
    out << "\n";
  }
  return out.str();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() / ("ocon_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Two well-separated gaussian blobs in 2-D, already in [0, 1], labelled 0 / 1
/// under the binary label system.
inline ocon::FeatureMatrix separable_matrix(std::size_t per_class, std::uint64_t seed) {
  ocon::Rng rng(seed);
  ocon::FeatureMatrix m;
  m.values.resize(static_cast<Eigen::Index>(2 * per_class), 2);
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int label = i < per_class ? 0 : 1;
    const double cx = label == 0 ? 0.25 : 0.75;
    m.values(static_cast<Eigen::Index>(i), 0) = std::clamp(cx + 0.05 * rng.normal(), 0.0, 1.0);
    m.values(static_cast<Eigen::Index>(i), 1) = std::clamp(0.5 + 0.15 * rng.normal(), 0.0, 1.0);
    m.labels.push_back(label);
    m.groups.push_back(ocon::SpeakerGroup::Man);
  }
  m.scaling = {ocon::ScalingKind::MinMax, {0.0, 0.0}, {1.0, 1.0}};
  m.label_system = ocon::LabelSystem::Binary;
  return m;
}

}  // namespace testing_support
