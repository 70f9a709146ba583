#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "voxmem/errors.hpp"

namespace voxmem {

// Little-endian binary primitives used by every on-disk format.

namespace detail {

template <typename U>
inline U to_le(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      out |= ((v >> (8 * (sizeof(U) - 1 - i))) & 0xffU) << (8 * i);
    return out;
  }
  return v;
}

}  // namespace detail

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path)
      : path_(path.string()), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open for writing: " + path_);
  }

  void magic(const char (&m)[5]) { out_.write(m, 4); }

  void u32(std::uint32_t v) { raw(detail::to_le(v)); }
  void u64(std::uint64_t v) { raw(detail::to_le(v)); }

  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    raw(detail::to_le(bits));
  }

  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    raw(detail::to_le(bits));
  }

  void bytes(std::span<const std::uint8_t> data) {
    out_.write(reinterpret_cast<const char*>(data.data()),
               static_cast<std::streamsize>(data.size()));
  }

  void text(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

  void close() {
    out_.close();
    if (!out_) throw IoError("write failed: " + path_);
  }

 private:
  template <typename U>
  void raw(U v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(U));
  }

  std::string path_;
  std::ofstream out_;
};

// Whole-file reader that tracks the byte offset so malformed files can be
// reported precisely.
class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : path_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path_);
    in.seekg(0, std::ios::end);
    buf_.resize(static_cast<std::size_t>(in.tellg()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!in) throw IoError("read failed: " + path_);
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

  void expect_magic(const char (&m)[5]) {
    if (remaining() < 4 || std::memcmp(buf_.data() + pos_, m, 4) != 0)
      fail(std::string("bad magic, expected '") + m + "'");
    pos_ += 4;
  }

  std::uint32_t u32() { return detail::to_le(take<std::uint32_t>()); }
  std::uint64_t u64() { return detail::to_le(take<std::uint64_t>()); }

  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::vector<std::uint8_t> bytes(std::size_t n) {
    if (remaining() < n) fail("truncated, need " + std::to_string(n) + " bytes");
    std::vector<std::uint8_t> out(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }

  std::string string(std::size_t n) {
    if (remaining() < n) fail("truncated string of " + std::to_string(n) + " bytes");
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void expect_end() {
    if (remaining() != 0) fail("trailing bytes");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }

 private:
  template <typename U>
  U take() {
    if (remaining() < sizeof(U)) fail("truncated, need " + std::to_string(sizeof(U)) + " bytes");
    U v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::string path_;
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

// FNV-1a over a file's bytes; used for snapshot/report identity checks.
std::uint64_t fnv1a64_file(const std::filesystem::path& path);
std::uint64_t fnv1a64(std::span<const std::uint8_t> data);

}  // namespace voxmem
