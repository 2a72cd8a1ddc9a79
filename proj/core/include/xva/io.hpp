#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xva/classifier.hpp"

namespace xva::io {

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Little-endian byte sink.
class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { buf_.push_back(v); }
  void put_u32(std::uint32_t v);
  void put_f32(float v);
  void put_bytes(std::span<const std::uint8_t> bytes);
  void put_bytes(std::string_view bytes);
  /// Appends the CRC32 of everything written so far.
  void put_crc();

  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Little-endian byte source. Reads past the end throw IoError naming
/// `source`.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string source);

  std::uint8_t u8();
  std::uint32_t u32();
  float f32();
  std::span<const std::uint8_t> bytes(std::size_t n);
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& source() const { return source_; }

  [[noreturn]] void fail(const std::string& what) const;

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string source_;
};

/// Verifies and strips the trailing CRC32. Throws IoError on mismatch.
std::span<const std::uint8_t> check_crc(std::span<const std::uint8_t> bytes,
                                        const std::string& source);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

// --- Feature files -------------------------------------------------------------

inline constexpr std::uint32_t kFeatureFileVersion = 1;

std::vector<std::uint8_t> encode_features(std::span<const ViewFeatureSequence<float>> views);
std::vector<ViewFeatureSequence<float>> decode_features(std::span<const std::uint8_t> bytes,
                                                        const std::string& source);

void save_features(const std::filesystem::path& path,
                   std::span<const ViewFeatureSequence<float>> views);
std::vector<ViewFeatureSequence<float>> load_features(const std::filesystem::path& path);

}  // namespace xva::io
