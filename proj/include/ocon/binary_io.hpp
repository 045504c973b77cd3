#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "ocon/error.hpp"

namespace ocon {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// 64-bit FNV-1a. Used for payload checksums and content hashes.
inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                             std::uint64_t hash = 0xCBF29CE484222325ULL) {
  for (std::uint8_t b : bytes) {
    hash ^= b;
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

inline std::uint64_t fnv1a64(std::string_view text) {
  return fnv1a64({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoError, "short write to " + path.string());
}

inline std::string file_hash(const std::filesystem::path& path) {
  return hex64(fnv1a64(read_file_bytes(path)));
}

class ByteWriter {
 public:
  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }

  void put_bytes(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

  void put_string(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }

  void put_doubles(std::span<const double> values) {
    put<std::uint64_t>(values.size());
    for (double v : values) put(v);
  }

  /// Appends the FNV-1a checksum of everything written so far.
  void seal() { put<std::uint64_t>(fnv1a64(buf_)); }

  const std::vector<std::uint8_t>& bytes() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::vector<double> get_doubles() {
    const auto n = get<std::uint64_t>();
    need_items(n, sizeof(double));
    std::vector<double> out(n);
    for (auto& v : out) v = get<double>();
    return out;
  }

  void need_items(std::uint64_t count, std::size_t item_size) const {
    if (count > (bytes_.size() - pos_) / item_size) throw Error(Errc::CorruptPayload, "truncated payload");
  }

  /// Verifies the trailing checksum written by ByteWriter::seal.
  void verify_seal() const {
    if (bytes_.size() < sizeof(std::uint64_t)) throw Error(Errc::CorruptPayload, "truncated payload");
    const std::size_t body = bytes_.size() - sizeof(std::uint64_t);
    std::uint64_t stored;
    std::memcpy(&stored, bytes_.data() + body, sizeof stored);
    if (stored != fnv1a64(bytes_.first(body))) throw Error(Errc::CorruptPayload, "checksum mismatch");
  }

  /// True when only the trailing checksum remains.
  bool at_seal() const { return bytes_.size() - pos_ == sizeof(std::uint64_t); }

  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) throw Error(Errc::CorruptPayload, "truncated payload");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace ocon
