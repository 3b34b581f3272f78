#include "deid/binio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace deid::binio {

void Writer::magic(const char (&m)[9]) {
  bytes({reinterpret_cast<const unsigned char*>(m), 8});
}

void Writer::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void Writer::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void Writer::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void Writer::f64s(std::span<const double> v) {
  for (double d : v) f64(d);
}

void Writer::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes({reinterpret_cast<const unsigned char*>(s.data()), s.size()});
}

void Writer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

Reader Reader::from_file(const std::filesystem::path& path) { return Reader(read_file(path)); }

const unsigned char* Reader::need(std::size_t n) {
  if (data_.size() - pos_ < n)
    throw DecodeError("unexpected end of data: need " + std::to_string(n) + " bytes", pos_);
  const unsigned char* p = data_.data() + pos_;
  pos_ += n;
  return p;
}

void Reader::expect_magic(const char (&m)[9]) {
  const std::size_t at = pos_;
  const unsigned char* p = need(8);
  if (std::memcmp(p, m, 8) != 0) throw DecodeError(std::string("bad magic, expected ") + m, at);
}

std::uint32_t Reader::u32() {
  const unsigned char* p = need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t Reader::u64() {
  const unsigned char* p = need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

double Reader::f64() { return std::bit_cast<double>(u64()); }

void Reader::f64s(std::span<double> out) {
  for (double& d : out) d = f64();
}

std::string Reader::str(std::size_t max_len) {
  const std::size_t at = pos_;
  const std::uint32_t len = u32();
  if (len > max_len) throw DecodeError("string length " + std::to_string(len) + " exceeds limit", at);
  const unsigned char* p = need(len);
  return std::string(reinterpret_cast<const char*>(p), len);
}

}  // namespace deid::binio
