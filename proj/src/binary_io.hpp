#pragma once

// Little-endian byte buffers with a trailing CRC-32, shared by the dataset and
// checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gmml/error.hpp"

namespace gmml::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

class ByteWriter {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }
  template <typename T>
  void put(T value) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    bytes_.insert(bytes_.end(), raw, raw + sizeof(T));
  }
  /// Appends the CRC-32 of everything written so far.
  void seal() { put<std::uint32_t>(crc32(bytes_)); }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool has(std::size_t n) const { return pos_ + n <= bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

  template <typename T>
  T get() {
    if (!has(sizeof(T))) throw Error(ErrorCode::truncated_payload, "unexpected end of file");
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string magic(std::size_t n) {
    if (!has(n)) throw Error(ErrorCode::truncated_payload, "file shorter than its magic");
    std::string tag(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return tag;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

/// Verifies the trailing CRC-32 over all preceding bytes.
void check_crc(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace gmml::io
