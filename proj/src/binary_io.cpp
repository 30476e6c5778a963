#include "scdh/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include "scdh/error.hpp"

namespace scdh::io {

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteReader::require(std::size_t n, const char* field) const {
  if (remaining() < n) {
    throw ParseError(std::string("truncated input reading ") + field + ": expected " +
                         std::to_string(n) + " bytes, " + std::to_string(remaining()) +
                         " available",
                     pos_);
  }
}

std::uint64_t ByteReader::get(const char* field, int width) {
  require(static_cast<std::size_t>(width), field);
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
  }
  pos_ += static_cast<std::size_t>(width);
  return v;
}

std::uint8_t ByteReader::u8(const char* field) { return static_cast<std::uint8_t>(get(field, 1)); }
float ByteReader::f32(const char* field) { return std::bit_cast<float>(u32(field)); }
double ByteReader::f64(const char* field) { return std::bit_cast<double>(u64(field)); }

std::string_view ByteReader::bytes(std::size_t n, const char* field) {
  require(n, field);
  auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

void ByteReader::expect_magic(std::string_view magic, const char* container) {
  const auto start = pos_;
  if (remaining() < magic.size() || data_.substr(pos_, magic.size()) != magic) {
    throw ParseError(std::string("bad magic for ") + container + " (expected \"" +
                         std::string(magic) + "\")",
                     start);
  }
  pos_ += magic.size();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot rename " + tmp.string() + ": " + ec.message());
  }
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace scdh::io
