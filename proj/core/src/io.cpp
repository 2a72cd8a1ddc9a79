#include "xva/io.hpp"

#include <zlib.h>
#include <unistd.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "xva/error.hpp"

namespace xva::io {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  const std::uint8_t* p = bytes.data();
  std::size_t left = bytes.size();
  while (left > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void ByteWriter::put_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::put_bytes(std::span<const std::uint8_t> bytes) {
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

void ByteWriter::put_bytes(std::string_view bytes) {
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

void ByteWriter::put_crc() { put_u32(crc32(buf_)); }

ByteReader::ByteReader(std::span<const std::uint8_t> bytes, std::string source)
    : data_(bytes), source_(std::move(source)) {}

void ByteReader::fail(const std::string& what) const {
  throw IoError(source_ + ": " + what + " (at byte " + std::to_string(pos_) + ")");
}

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n) {
  if (n > remaining()) fail("truncated file");
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t ByteReader::u8() { return bytes(1)[0]; }

std::uint32_t ByteReader::u32() {
  const auto b = bytes(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::span<const std::uint8_t> check_crc(std::span<const std::uint8_t> bytes,
                                        const std::string& source) {
  if (bytes.size() < 4) throw IoError(source + ": truncated file (no checksum)");
  const auto body = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.last(4), source);
  const std::uint32_t stored = tail.u32();
  const std::uint32_t actual = crc32(body);
  if (stored != actual) throw IoError(source + ": CRC mismatch, file is corrupted");
  return body;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string());
  }
  auto tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed: " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                    text.size()));
}

namespace {
constexpr std::string_view kFeatureMagic = "XVAF";
}

std::vector<std::uint8_t> encode_features(std::span<const ViewFeatureSequence<float>> views) {
  if (views.empty() || views.size() > 255) {
    throw UsageError("feature file needs 1..255 views");
  }
  ByteWriter w;
  w.put_bytes(kFeatureMagic);
  w.put_u32(kFeatureFileVersion);
  w.put_u8(static_cast<std::uint8_t>(views.size()));
  for (const auto& v : views) {
    require_rank(v.features, 2, "feature sequence");
    w.put_u8(static_cast<std::uint8_t>(v.view));
    w.put_u32(static_cast<std::uint32_t>(v.features.dim(0)));
    w.put_u32(static_cast<std::uint32_t>(v.features.dim(1)));
    for (float x : v.features.data()) w.put_f32(x);
  }
  w.put_crc();
  return w.take();
}

std::vector<ViewFeatureSequence<float>> decode_features(std::span<const std::uint8_t> bytes,
                                                        const std::string& source) {
  if (bytes.size() < kFeatureMagic.size() ||
      std::memcmp(bytes.data(), kFeatureMagic.data(), kFeatureMagic.size()) != 0) {
    throw IoError(source + ": not a feature file (bad magic)");
  }
  ByteReader r(check_crc(bytes, source), source);
  r.bytes(kFeatureMagic.size());
  const std::uint32_t version = r.u32();
  if (version != kFeatureFileVersion) {
    r.fail("unsupported feature file version " + std::to_string(version));
  }
  const std::size_t count = r.u8();
  if (count == 0) r.fail("feature file declares zero views");
  std::vector<ViewFeatureSequence<float>> views;
  std::set<std::uint8_t> seen;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t id = r.u8();
    if (id > static_cast<std::uint8_t>(ViewId::kHead)) r.fail("unknown view id");
    if (!seen.insert(id).second) r.fail("duplicate view id");
    const std::size_t len = r.u32();
    const std::size_t nz = r.u32();
    if (len == 0 || nz == 0) r.fail("empty feature sequence");
    if (len * nz * 4 > r.remaining()) r.fail("declared size exceeds payload");
    std::vector<float> data(len * nz);
    for (auto& x : data) x = r.f32();
    views.push_back({static_cast<ViewId>(id), Tensor({len, nz}, std::move(data))});
  }
  if (r.remaining() != 0) r.fail("trailing bytes after last view");
  return views;
}

void save_features(const std::filesystem::path& path,
                   std::span<const ViewFeatureSequence<float>> views) {
  write_file_atomic(path, encode_features(views));
}

std::vector<ViewFeatureSequence<float>> load_features(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IoError("feature file not found: " + path.string());
  }
  return decode_features(read_file(path), path.string());
}

}  // namespace xva::io
