#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace saad {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

uint32_t crc32(std::span<const uint8_t> bytes);

/// Little-endian binary encoder.
class ByteWriter {
 public:
  void u8(uint8_t v) { bytes_.push_back(v); }
  void u32(uint32_t v);
  void u64(uint64_t v);
  void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
  void f64(double v);
  void raw(std::span<const uint8_t> data);
  void str(const std::string& s);
  /// Appends the CRC-32 of everything written so far.
  void finish_with_crc();

  const std::vector<uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<uint8_t> bytes_;
};

/// Bounds-checked little-endian decoder. Errors raise FormatError.
class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

  uint8_t u8();
  uint32_t u32();
  uint64_t u64();
  int64_t i64() { return static_cast<int64_t>(u64()); }
  double f64();
  std::span<const uint8_t> raw(size_t n);
  std::string str();
  void expect_magic(std::string_view magic);
  bool at_end() const { return pos_ == bytes_.size(); }
  size_t position() const { return pos_; }
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

/// Splits off and verifies a trailing CRC-32; returns the covered payload.
std::span<const uint8_t> verify_crc(std::span<const uint8_t> file, const std::string& what);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const uint8_t> bytes);

/// 64-bit FNV-1a, used for printable file fingerprints.
uint64_t fnv1a64(std::span<const uint8_t> bytes);

}  // namespace saad
