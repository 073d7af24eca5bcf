#ifndef BCPNN_BINARY_IO_HPP
#define BCPNN_BINARY_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "errors.hpp"

namespace bcpnn::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class Writer {
public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void tag(std::string_view t) { raw(t.data(), t.size()); }
  void f64s(std::span<const double> v) { raw(v.data(), v.size() * sizeof(double)); }
  void f32s(std::span<const float> v) { raw(v.data(), v.size() * sizeof(float)); }
  void bytes(std::span<const unsigned char> v) { raw(v.data(), v.size()); }

  const std::vector<unsigned char>& buffer() const noexcept { return buf_; }
  std::vector<unsigned char>& buffer() noexcept { return buf_; }

private:
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  std::vector<unsigned char> buf_;
};

class Reader {
public:
  explicit Reader(std::span<const unsigned char> data) : data_(data) {}

  std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
  double f64() { double v; raw(&v, 8); return v; }
  std::string tag(std::size_t n) { std::string s(n, '\0'); raw(s.data(), n); return s; }
  std::vector<double> f64s(std::size_t n) { check(n, sizeof(double)); std::vector<double> v(n); raw(v.data(), n * 8); return v; }
  std::vector<float> f32s(std::size_t n) { check(n, sizeof(float)); std::vector<float> v(n); raw(v.data(), n * 4); return v; }
  std::vector<unsigned char> bytes(std::size_t n) { check(n, 1); std::vector<unsigned char> v(n); raw(v.data(), n); return v; }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

private:
  void check(std::size_t n, std::size_t width) const {
    if (width != 0 && n > remaining() / width) throw LengthError("unexpected end of data");
  }
  void raw(void* p, std::size_t n) {
    if (n > remaining()) throw LengthError("unexpected end of data");
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::span<const unsigned char> data_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32(std::span<const unsigned char> data) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < data.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(data.size() - off, 1u << 30));
    c = ::crc32(c, data.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

/// FNV-1a, used for content fingerprints (not integrity).
class Fnv1a {
public:
  void add(const void* p, std::size_t n) noexcept {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h_ = (h_ ^ c[i]) * 0x100000001b3ULL;
  }
  template <class T> void add(std::span<const T> v) noexcept { add(v.data(), v.size_bytes()); }
  template <class T> void add_value(const T& v) noexcept { add(&v, sizeof v); }
  std::uint64_t value() const noexcept { return h_; }

private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::vector<unsigned char> read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

/// Write via a temporary file and rename.
inline void write_all(const std::filesystem::path& p, std::span<const unsigned char> data) {
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

} // namespace bcpnn::io

#endif
