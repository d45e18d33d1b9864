#pragma once

// Little-endian primitive encoding shared by the embedding, cluster-model and
// method-model file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "faircal/error.hpp"

namespace faircal::binary {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    T out;
    auto* src = reinterpret_cast<const unsigned char*>(&v);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = src[sizeof(T) - 1 - i];
    return out;
  } else {
    return v;
  }
}

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void bytes(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }
  void u8(std::uint8_t v) { raw(v); }
  void u16(std::uint16_t v) { raw(v); }
  void u32(std::uint32_t v) { raw(v); }
  void u64(std::uint64_t v) { raw(v); }
  void f32(float v) { raw(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { raw(std::bit_cast<std::uint64_t>(v)); }

  /// u16 length prefix followed by the UTF-8 bytes.
  void short_string(std::string_view s) {
    if (s.size() > 0xFFFF) throw StructuralError("string longer than 65535 bytes: " + std::string(s.substr(0, 32)));
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s);
  }

 private:
  template <typename T>
  void raw(T v) {
    T le = to_little(v);
    out_.write(reinterpret_cast<const char*>(&le), sizeof(T));
  }

  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::size_t offset() const noexcept { return offset_; }

  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    read_into(s.data(), n);
    return s;
  }
  std::uint8_t u8() { return raw<std::uint8_t>(); }
  std::uint16_t u16() { return raw<std::uint16_t>(); }
  std::uint32_t u32() { return raw<std::uint32_t>(); }
  std::uint64_t u64() { return raw<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(raw<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(raw<std::uint64_t>()); }
  std::string short_string() { return bytes(u16()); }

  void expect_magic(std::string_view magic) {
    std::size_t at = offset_;
    if (bytes(magic.size()) != magic) {
      throw ParseError("bad magic, expected '" + std::string(magic) + "'", at);
    }
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  template <typename T>
  T raw() {
    T v;
    read_into(&v, sizeof(T));
    return to_little(v);
  }

  void read_into(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw ParseError("unexpected end of binary data", offset_ + static_cast<std::size_t>(in_.gcount()));
    }
    offset_ += n;
  }

  std::istream& in_;
  std::size_t offset_ = 0;
};

}  // namespace faircal::binary
