#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace mae::io {

/// Write `contents` to a sibling temp file, then rename it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

/// FNV-1a 64-bit digest, used for dataset identity and cache keys.
std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// Little-endian encoder for the binary cache and checkpoint formats.
class ByteWriter {
 public:
  void bytes(std::string_view raw) { buffer_.append(raw); }
  void u64(std::uint64_t value);
  void f64(double value);
  const std::string& str() const { return buffer_; }

 private:
  std::string buffer_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  /// Consumes `magic` or throws a parse error naming `what`.
  void expect(std::string_view magic, std::string_view what);
  std::uint64_t u64();
  double f64();
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n);

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace mae::io
