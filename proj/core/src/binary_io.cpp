#include "saad/binary_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace saad {

uint32_t crc32(std::span<const uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<size_t>(bytes.size() - offset, 1u << 30));
    crc = ::crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<uint32_t>(crc);
}

void ByteWriter::u32(uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<uint64_t>(v)); }

void ByteWriter::raw(std::span<const uint8_t> data) {
  bytes_.insert(bytes_.end(), data.begin(), data.end());
}

void ByteWriter::str(const std::string& s) {
  u64(s.size());
  raw({reinterpret_cast<const uint8_t*>(s.data()), s.size()});
}

void ByteWriter::finish_with_crc() { u32(crc32(bytes_)); }

std::span<const uint8_t> ByteReader::raw(size_t n) {
  if (n > bytes_.size() - pos_) throw FormatError("unexpected end of data");
  auto out = bytes_.subspan(pos_, n);
  pos_ += n;
  return out;
}

uint8_t ByteReader::u8() { return raw(1)[0]; }

uint32_t ByteReader::u32() {
  const auto b = raw(4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[static_cast<size_t>(i)]) << (8 * i);
  return v;
}

uint64_t ByteReader::u64() {
  const auto b = raw(8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[static_cast<size_t>(i)]) << (8 * i);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
  const uint64_t n = u64();
  if (n > bytes_.size() - pos_) throw FormatError("string length exceeds data");
  const auto b = raw(static_cast<size_t>(n));
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

void ByteReader::expect_magic(std::string_view magic) {
  const auto b = raw(magic.size());
  if (std::memcmp(b.data(), magic.data(), magic.size()) != 0) {
    throw FormatError("bad magic bytes, expected " + std::string(magic));
  }
}

std::span<const uint8_t> verify_crc(std::span<const uint8_t> file, const std::string& what) {
  if (file.size() < 4) throw FormatError(what + ": file too short");
  const auto payload = file.first(file.size() - 4);
  ByteReader tail(file.subspan(file.size() - 4));
  if (tail.u32() != crc32(payload)) throw FormatError(what + ": checksum mismatch");
  return payload;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

uint64_t fnv1a64(std::span<const uint8_t> bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace saad
