// SPDX-License-Identifier: Apache-2.0
//
// Little-endian encode/decode over byte buffers, shared by the feature-file
// and checkpoint codecs.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "mtfl/error.hpp"

namespace mtfl::detail {

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out = static_cast<U>((out << 8) | ((v >> (8 * i)) & 0xFF));
    }
    return out;
  } else {
    return v;
  }
}

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u32(std::uint32_t v) { raw(to_little(v)); }
  void u64(std::uint64_t v) { raw(to_little(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

  const std::vector<char>& buffer() const noexcept { return buf_; }

 private:
  template <typename U>
  void raw(U v) {
    char tmp[sizeof(U)];
    std::memcpy(tmp, &v, sizeof(U));
    buf_.insert(buf_.end(), tmp, tmp + sizeof(U));
  }
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(const char* data, std::size_t size, std::string origin)
      : data_(data), size_(size), origin_(std::move(origin)) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    std::string_view out(data_ + pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32() { return to_little(raw<std::uint32_t>()); }
  std::uint64_t u64() { return to_little(raw<std::uint64_t>()); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    return std::string(bytes(n));
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return size_ - pos_; }
  void need(std::size_t n) const {
    if (n > size_ - pos_) {
      throw FormatError(FormatErrorKind::kTruncated,
                        origin_ + ": needed " + std::to_string(n) + " bytes at offset " +
                            std::to_string(pos_) + ", " + std::to_string(size_ - pos_) + " left");
    }
  }

 private:
  template <typename U>
  U raw() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, data_ + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string origin_;
};

inline std::vector<char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return data;
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace mtfl::detail
