#pragma once

// Plain declarative config files shared by column layouts, model/training
// configs and search stages.
//
//   # comment
//   key = value
//   grid.lr = 1e-3, 1e-4, 1e-5
//
// Keys are unique; later duplicates are rejected. Whitespace around keys and
// values is trimmed. Values are interpreted by the consumer.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ocon/error.hpp"

namespace ocon {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_list(std::string_view s, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    const auto item = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!item.empty()) out.emplace_back(item);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
  s = trim(s);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<bool> parse_bool(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  return std::nullopt;
}

/// Shortest decimal text that parses back to the same double.
/// Shortest round-tripping text; fixed notation for ordinary magnitudes.
inline std::string format_double(double v) {
  char buf[400];
  const double a = std::abs(v);
  if (a == 0.0 || (a >= 1e-4 && a < 1e15)) {
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
    return std::string(buf, ptr);
  }
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific);
  std::string s(buf, ptr);
  // 1e-05 -> 1e-5
  const auto e = s.find('e');
  if (e != std::string::npos) {
    auto d = e + 2;
    while (d + 1 < s.size() && s[d] == '0') s.erase(d, 1);
    if (s[e + 1] == '+') s.erase(e + 1, 1);
  }
  return s;
}

class KeyValueConfig {
 public:
  using Entries = std::vector<std::pair<std::string, std::string>>;

  static KeyValueConfig parse(std::string_view text, std::string_view origin = "<string>") {
    KeyValueConfig cfg;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto nl = text.find('\n', start);
      auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (!line.empty()) {
        const auto eq = line.find('=');
        const auto key = eq == std::string_view::npos ? std::string_view{} : trim(line.substr(0, eq));
        if (key.empty())
          throw Error(Errc::InvalidConfig, std::string(origin) + ":" + std::to_string(line_no) + ": expected key = value");
        cfg.set(std::string(key), std::string(trim(line.substr(eq + 1))), origin, line_no);
      }
      if (nl == std::string_view::npos) break;
      start = nl + 1;
    }
    return cfg;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  /// Inserts or overrides (CLI flags override file values).
  void assign(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
      if (k == key) {
        v = value;
        return;
      }
    }
    entries_.emplace_back(key, value);
  }

  bool contains(std::string_view key) const { return find(key) != nullptr; }

  std::optional<std::string> get(std::string_view key) const {
    if (const auto* v = find(key)) return *v;
    return std::nullopt;
  }

  const Entries& entries() const { return entries_; }

  std::string to_string() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
  }

 private:
  void set(std::string key, std::string value, std::string_view origin, std::size_t line_no) {
    if (contains(key))
      throw Error(Errc::InvalidConfig, std::string(origin) + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    entries_.emplace_back(std::move(key), std::move(value));
  }

  const std::string* find(std::string_view key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return &v;
    return nullptr;
  }

  Entries entries_;
};

}  // namespace ocon
