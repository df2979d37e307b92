#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace px3d::io {

/// Raised for malformed or unreadable container files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Little-endian byte sink.
class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_arithmetic_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    buffer_.insert(buffer_.end(), bytes, bytes + sizeof(T));
  }
  void put_bytes(std::string_view bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }

  const std::vector<char>& bytes() const { return buffer_; }
  std::size_t size() const { return buffer_.size(); }

 private:
  std::vector<char> buffer_;
};

/// Little-endian byte source over an in-memory buffer.
class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes, std::string origin = {})
      : buffer_(std::move(bytes)), origin_(std::move(origin)) {}

  template <typename T>
  T get() {
    static_assert(std::is_arithmetic_v<T>);
    need(sizeof(T));
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, buffer_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string out(buffer_.data() + pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return buffer_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (buffer_.size() - pos_ < n) throw FormatError("truncated file " + origin_);
  }
  std::vector<char> buffer_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);

/// Writes via a sibling temporary file and rename, so readers never observe a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, const std::vector<char>& bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace px3d::io
