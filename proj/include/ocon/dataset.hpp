#pragma once

// HGCW-style measurement ingestion: filename decoding, delimited-row parsing
// under a user-supplied column layout, usable-record filtering and per-class
// statistics.

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ocon/config.hpp"
#include "ocon/error.hpp"

namespace ocon {

enum class SpeakerGroup : std::uint8_t { Man, Boy, Woman, Girl };

inline constexpr std::array<SpeakerGroup, 4> kSpeakerGroups = {SpeakerGroup::Man, SpeakerGroup::Boy,
                                                               SpeakerGroup::Woman, SpeakerGroup::Girl};

inline constexpr char group_char(SpeakerGroup g) {
  constexpr std::array<char, 4> chars = {'m', 'b', 'w', 'g'};
  return chars[static_cast<std::size_t>(g)];
}

inline constexpr std::string_view group_name(SpeakerGroup g) {
  constexpr std::array<std::string_view, 4> names = {"man", "boy", "woman", "girl"};
  return names[static_cast<std::size_t>(g)];
}

inline std::optional<SpeakerGroup> group_from_char(char c) {
  for (auto g : kSpeakerGroups)
    if (group_char(g) == c) return g;
  return std::nullopt;
}

inline constexpr int kPhonemeCount = 12;

/// ARPABet codes in label-id order.
inline constexpr std::array<std::string_view, kPhonemeCount> kPhonemeCodes = {
    "ae", "ah", "aw", "eh", "er", "ei", "ih", "iy", "oa", "oo", "uh", "uw"};

struct PhonemeLabel {
  int id = 0;

  std::string_view code() const { return kPhonemeCodes[static_cast<std::size_t>(id)]; }
  friend bool operator==(PhonemeLabel, PhonemeLabel) = default;
};

inline std::optional<PhonemeLabel> phoneme_from_code(std::string_view code) {
  for (int i = 0; i < kPhonemeCount; ++i)
    if (kPhonemeCodes[static_cast<std::size_t>(i)] == code) return PhonemeLabel{i};
  return std::nullopt;
}

/// Formant sampling points. Storage and feature order is 10%, 50%, SS, 80%.
enum class TimePoint : std::uint8_t { P10, P50, SteadyState, P80 };

inline constexpr std::array<std::string_view, 4> kTimePointKeys = {"10", "50", "ss", "80"};

/// Which features a record must supply.
enum class FeatureSetKind : std::uint8_t { SteadyState3, SteadyState4, TimeTracks12 };

inline constexpr std::size_t feature_dim(FeatureSetKind kind) {
  switch (kind) {
    case FeatureSetKind::SteadyState3: return 3;
    case FeatureSetKind::SteadyState4: return 4;
    case FeatureSetKind::TimeTracks12: return 12;
  }
  return 0;
}

inline constexpr std::string_view feature_set_name(FeatureSetKind kind) {
  switch (kind) {
    case FeatureSetKind::SteadyState3: return "ss3";
    case FeatureSetKind::SteadyState4: return "ss4";
    case FeatureSetKind::TimeTracks12: return "tt12";
  }
  return "?";
}

inline FeatureSetKind feature_set_from_name(std::string_view name) {
  for (auto k : {FeatureSetKind::SteadyState3, FeatureSetKind::SteadyState4, FeatureSetKind::TimeTracks12})
    if (feature_set_name(k) == name) return k;
  throw Error(Errc::InvalidConfig, "unknown feature set '" + std::string(name) + "' (expected ss3, ss4 or tt12)");
}

struct FeatureRecord {
  std::string name;
  SpeakerGroup group = SpeakerGroup::Man;
  int speaker_no = 0;
  PhonemeLabel phoneme;
  double f0_ss = 0.0;
  /// formants[i][t]: F(i+1) at TimePoint t.
  std::array<std::array<double, 4>, 3> formants{};

  double formant(int index, TimePoint t) const {
    return formants[static_cast<std::size_t>(index)][static_cast<std::size_t>(t)];
  }
};

struct DecodedName {
  SpeakerGroup group;
  int speaker_no;
  PhonemeLabel phoneme;
};

inline DecodedName decode_filename(std::string_view name) {
  if (name.size() != 5) throw Error(Errc::MalformedFilename, "'" + std::string(name) + "' is not 5 characters");
  const auto group = group_from_char(name[0]);
  if (!group) throw Error(Errc::UnknownGroupChar, "group character '" + std::string(1, name[0]) + "' in '" + std::string(name) + "'");
  if (!std::isdigit(static_cast<unsigned char>(name[1])) || !std::isdigit(static_cast<unsigned char>(name[2])))
    throw Error(Errc::NonNumericSpeakerId, "speaker id '" + std::string(name.substr(1, 2)) + "' in '" + std::string(name) + "'");
  const auto phoneme = phoneme_from_code(name.substr(3, 2));
  if (!phoneme) throw Error(Errc::UnknownPhonemeCode, "phoneme '" + std::string(name.substr(3, 2)) + "' in '" + std::string(name) + "'");
  return {*group, (name[1] - '0') * 10 + (name[2] - '0'), *phoneme};
}

inline std::string encode_filename(SpeakerGroup group, int speaker_no, PhonemeLabel phoneme) {
  if (speaker_no < 0 || speaker_no > 99) throw Error(Errc::NonNumericSpeakerId, "speaker number out of 0..99");
  std::string out;
  out += group_char(group);
  out += static_cast<char>('0' + speaker_no / 10);
  out += static_cast<char>('0' + speaker_no % 10);
  out += phoneme.code();
  return out;
}

/// Zero-based column indices of each field in a data row.
///
/// Plain-text form (see KeyValueConfig):
///   filename = 0
///   f0 = 2
///   f1_ss = 3   f2_ss = 4   f3_ss = 5
///   f1_10 = 7 ...  f3_80 = 15      (f<formant>_<10|50|ss|80>)
///   skip_preamble = yes            (ignore leading lines until the first
///                                   row that starts with a valid filename)
struct ColumnLayout {
  int filename = 0;
  int f0 = 2;
  std::array<std::array<int, 4>, 3> formants{};
  bool skip_preamble = true;

  /// Layout of the public HGCW vowdata.dat table: name, duration, F0, F1-F4
  /// at steady state, then F1-F3 at the three tracked time points.
  static ColumnLayout hgcw_default() {
    ColumnLayout layout;
    for (int i = 0; i < 3; ++i) {
      auto& row = layout.formants[static_cast<std::size_t>(i)];
      row[static_cast<std::size_t>(TimePoint::SteadyState)] = 3 + i;
      row[static_cast<std::size_t>(TimePoint::P10)] = 7 + i;
      row[static_cast<std::size_t>(TimePoint::P50)] = 10 + i;
      row[static_cast<std::size_t>(TimePoint::P80)] = 13 + i;
    }
    return layout;
  }

  static std::string formant_key(int formant, TimePoint t) {
    return "f" + std::to_string(formant + 1) + "_" + std::string(kTimePointKeys[static_cast<std::size_t>(t)]);
  }

  /// Keys absent from the config keep their hgcw_default() value.
  static ColumnLayout from_config(const KeyValueConfig& cfg) {
    ColumnLayout layout = hgcw_default();
    auto read_index = [&](const std::string& key, int& slot) {
      if (const auto v = cfg.get(key)) {
        const auto idx = parse_int(*v);
        if (!idx || *idx < 0) throw Error(Errc::InvalidConfig, "layout key '" + key + "' must be a column index >= 0");
        slot = static_cast<int>(*idx);
      }
    };
    read_index("filename", layout.filename);
    read_index("f0", layout.f0);
    for (int i = 0; i < 3; ++i)
      for (std::size_t t = 0; t < 4; ++t)
        read_index(formant_key(i, static_cast<TimePoint>(t)), layout.formants[static_cast<std::size_t>(i)][t]);
    if (const auto v = cfg.get("skip_preamble")) {
      const auto b = parse_bool(*v);
      if (!b) throw Error(Errc::InvalidConfig, "layout key 'skip_preamble' must be a boolean");
      layout.skip_preamble = *b;
    }
    for (const auto& [key, value] : cfg.entries()) {
      bool known = key == "filename" || key == "f0" || key == "skip_preamble";
      for (int i = 0; i < 3 && !known; ++i)
        for (std::size_t t = 0; t < 4 && !known; ++t) known = key == formant_key(i, static_cast<TimePoint>(t));
      if (!known) throw Error(Errc::InvalidConfig, "unknown layout key '" + key + "'");
    }
    return layout;
  }
};

namespace detail {

inline std::vector<std::string_view> tokenize_row(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == ',' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != ',' && line[j] != '\r') ++j;
    cells.push_back(line.substr(i, j - i));
    i = j;
  }
  return cells;
}

inline bool looks_like_record(std::string_view line, int filename_col) {
  const auto cells = tokenize_row(line);
  if (static_cast<int>(cells.size()) <= filename_col) return false;
  try {
    decode_filename(cells[static_cast<std::size_t>(filename_col)]);
    return true;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace detail

/// Parses one data row. `line_no` is 1-based and only used in messages.
inline FeatureRecord parse_record(std::string_view line, const ColumnLayout& layout, std::size_t line_no) {
  const auto cells = detail::tokenize_row(line);
  const auto where = "line " + std::to_string(line_no);
  auto cell = [&](int col, const std::string& field) -> std::string_view {
    if (col >= static_cast<int>(cells.size()))
      throw Error(Errc::MissingColumn, field + " (column " + std::to_string(col) + ") absent on " + where);
    return cells[static_cast<std::size_t>(col)];
  };
  auto number = [&](int col, const std::string& field) {
    const auto v = parse_double(cell(col, field));
    if (!v || !std::isfinite(*v) || *v < 0.0)
      throw Error(Errc::MalformedRow, where + ": field " + field + " = '" + std::string(cell(col, field)) + "'");
    return *v;
  };

  FeatureRecord rec;
  rec.name = std::string(cell(layout.filename, "filename"));
  DecodedName decoded;
  try {
    decoded = decode_filename(rec.name);
  } catch (const Error& e) {
    throw Error(Errc::MalformedRow, where + ": " + e.what());
  }
  rec.group = decoded.group;
  rec.speaker_no = decoded.speaker_no;
  rec.phoneme = decoded.phoneme;
  rec.f0_ss = number(layout.f0, "f0");
  for (int i = 0; i < 3; ++i)
    for (std::size_t t = 0; t < 4; ++t)
      rec.formants[static_cast<std::size_t>(i)][t] =
          number(layout.formants[static_cast<std::size_t>(i)][t], ColumnLayout::formant_key(i, static_cast<TimePoint>(t)));
  return rec;
}

inline std::vector<FeatureRecord> parse_dataset(std::string_view text, const ColumnLayout& layout) {
  std::vector<FeatureRecord> records;
  bool in_body = !layout.skip_preamble;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    const auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    ++line_no;
    start = nl == std::string_view::npos ? text.size() : nl + 1;
    if (trim(line).empty()) continue;
    if (!in_body) {
      if (!detail::looks_like_record(line, layout.filename)) continue;
      in_body = true;
    }
    records.push_back(parse_record(line, layout, line_no));
  }
  return records;
}

inline std::vector<FeatureRecord> load_dataset(const std::filesystem::path& path, const ColumnLayout& layout) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_dataset(text, layout);
}

/// True iff every field `kind` needs is strictly positive.
inline bool is_usable(const FeatureRecord& r, FeatureSetKind kind) {
  if (!(r.f0_ss > 0.0)) return false;
  if (kind == FeatureSetKind::TimeTracks12) {
    for (const auto& track : r.formants)
      for (double v : track)
        if (!(v > 0.0)) return false;
    return true;
  }
  for (int i = 0; i < 3; ++i)
    if (!(r.formant(i, TimePoint::SteadyState) > 0.0)) return false;
  return true;
}

struct FilterResult {
  std::vector<FeatureRecord> kept;
  std::vector<FeatureRecord> dropped;
};

inline FilterResult filter_usable(std::span<const FeatureRecord> records, FeatureSetKind kind) {
  FilterResult out;
  for (const auto& r : records) (is_usable(r, kind) ? out.kept : out.dropped).push_back(r);
  return out;
}

struct ClassStats {
  /// counts[phoneme][group], group in SpeakerGroup order.
  std::array<std::array<std::size_t, 4>, kPhonemeCount> counts{};

  std::size_t phoneme_total(int phoneme) const {
    std::size_t n = 0;
    for (auto c : counts[static_cast<std::size_t>(phoneme)]) n += c;
    return n;
  }
  std::size_t group_total(SpeakerGroup g) const {
    std::size_t n = 0;
    for (const auto& row : counts) n += row[static_cast<std::size_t>(g)];
    return n;
  }
  std::size_t total() const {
    std::size_t n = 0;
    for (int p = 0; p < kPhonemeCount; ++p) n += phoneme_total(p);
    return n;
  }
  std::size_t at(int phoneme, SpeakerGroup g) const {
    return counts[static_cast<std::size_t>(phoneme)][static_cast<std::size_t>(g)];
  }
};

inline ClassStats class_statistics(std::span<const FeatureRecord> records) {
  ClassStats stats;
  for (const auto& r : records) ++stats.counts[static_cast<std::size_t>(r.phoneme.id)][static_cast<std::size_t>(r.group)];
  return stats;
}

/// Table in the layout: phoneme, samples, boys, girls, men, women, label id.
inline std::string format_class_statistics(const ClassStats& s) {
  std::string out = "phoneme\tsamples\tboys\tgirls\tmen\twomen\tlabel_id\n";
  auto row = [&](std::string_view name, std::size_t total, std::size_t b, std::size_t g, std::size_t m, std::size_t w,
                 std::string_view id) {
    out += std::string(name) + "\t" + std::to_string(total) + "\t" + std::to_string(b) + "\t" + std::to_string(g) + "\t" +
           std::to_string(m) + "\t" + std::to_string(w) + "\t" + std::string(id) + "\n";
  };
  for (int p = 0; p < kPhonemeCount; ++p)
    row(kPhonemeCodes[static_cast<std::size_t>(p)], s.phoneme_total(p), s.at(p, SpeakerGroup::Boy),
        s.at(p, SpeakerGroup::Girl), s.at(p, SpeakerGroup::Man), s.at(p, SpeakerGroup::Woman), std::to_string(p));
  row("TOTAL", s.total(), s.group_total(SpeakerGroup::Boy), s.group_total(SpeakerGroup::Girl),
      s.group_total(SpeakerGroup::Man), s.group_total(SpeakerGroup::Woman), std::to_string(kPhonemeCount));
  return out;
}

/// Layout of the canonical records file written by write_records:
/// name, f0, then F1..F3 each at 10%, 50%, SS, 80%.
inline ColumnLayout records_layout() {
  ColumnLayout layout;
  layout.filename = 0;
  layout.f0 = 1;
  for (int i = 0; i < 3; ++i)
    for (int t = 0; t < 4; ++t) layout.formants[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)] = 2 + 4 * i + t;
  layout.skip_preamble = true;
  return layout;
}

inline std::string write_records(std::span<const FeatureRecord> records) {
  std::string out = "# name\tf0";
  for (int i = 0; i < 3; ++i)
    for (int t = 0; t < 4; ++t) out += "\t" + ColumnLayout::formant_key(i, static_cast<TimePoint>(t));
  out += "\n";
  for (const auto& r : records) {
    out += r.name + "\t" + format_double(r.f0_ss);
    for (const auto& track : r.formants)
      for (double v : track) out += "\t" + format_double(v);
    out += "\n";
  }
  return out;
}

}  // namespace ocon
