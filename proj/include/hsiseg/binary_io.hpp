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
#include <vector>

#include "hsiseg/error.hpp"

namespace hsiseg::io {

// Little-endian encoder into an in-memory buffer. Files are written in one
// shot so a failed write never leaves a half-valid header behind.
class ByteWriter {
 public:
  void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }

  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  void f32s(std::span<const float> vs) {
    bytes_.reserve(bytes_.size() + 4 * vs.size());
    for (float v : vs) f32(v);
  }

  // u32 byte length followed by the raw UTF-8 bytes.
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    magic(s);
  }

  const std::vector<char>& bytes() const { return bytes_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw IoError("write failed: " + path.string());
  }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes, std::string source = "<memory>")
      : bytes_(std::move(bytes)), source_(std::move(source)) {}

  static ByteReader from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(data), path.string());
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }
  const std::string& source() const { return source_; }

  // Throws FormatError when the next bytes are not `m`.
  void expect_magic(std::string_view m) {
    if (remaining() < m.size() || std::string_view(bytes_.data() + pos_, m.size()) != m) {
      throw FormatError(source_ + ": expected magic \"" + std::string(m) + "\"");
    }
    pos_ += m.size();
  }

  bool peek_magic(std::string_view m) const {
    return remaining() >= m.size() && std::string_view(bytes_.data() + pos_, m.size()) == m;
  }

  std::uint8_t u8() {
    need(1, "u8");
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  std::vector<float> f32s(std::size_t n, std::string_view what) {
    if (n > remaining() / 4) {
      throw LengthError(source_ + ": " + std::string(what) + " declares " + std::to_string(n) +
                        " float32 values but only " + std::to_string(remaining()) + " bytes remain");
    }
    std::vector<float> out(n);
    for (auto& v : out) v = f32();
    return out;
  }

  std::string str() {
    const std::uint32_t n = u32();
    need(n, "string");
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw LengthError(source_ + ": truncated while reading " + what);
    }
  }

  std::vector<char> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace hsiseg::io
