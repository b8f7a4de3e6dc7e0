// Little-endian byte encoding shared by the volume and weights formats.
#ifndef LRP3D_SRC_BINARY_IO_HPP
#define LRP3D_SRC_BINARY_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "lrp3d/errors.hpp"

namespace lrp3d::detail {

static_assert(std::endian::native == std::endian::little, "byte encoding assumes a little-endian host");

using Bytes = std::vector<std::uint8_t>;

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }

  void put_string(std::string_view s) { put_bytes(s.data(), s.size()); }

  Bytes take() { return std::move(bytes_); }

 private:
  Bytes bytes_;
};

class ByteReader {
 public:
  ByteReader(const Bytes& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  template <typename T>
  T get(const char* field) {
    require(sizeof(T), field);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  void get_bytes(void* out, std::size_t n, const char* field) {
    require(n, field);
    if (n) std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::string get_string(std::size_t n, const char* field) {
    std::string s(n, '\0');
    get_bytes(s.data(), n, field);
    return s;
  }

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return bytes_.size() - pos_; }

  [[noreturn]] void fail(const std::string& msg) const { throw FormatError(what_ + ": " + msg, pos_); }

  void require(std::uint64_t n, const char* field) const {
    if (remaining() < n)
      throw FormatError(what_ + ": truncated while reading " + field + " (need " + std::to_string(n) +
                            " bytes, " + std::to_string(remaining()) + " left)",
                        pos_);
  }

 private:
  const Bytes& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path, 0);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing", 0);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path, bytes.size());
}

}  // namespace lrp3d::detail

#endif  // LRP3D_SRC_BINARY_IO_HPP
