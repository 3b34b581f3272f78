#pragma once

// Little-endian binary framing shared by the checkpoint and gallery formats.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "deid/error.hpp"

namespace deid::binio {

/// Reads a whole file; throws IoError when it cannot be opened.
std::vector<unsigned char> read_file(const std::filesystem::path& path);

class Writer {
 public:
  void bytes(std::span<const unsigned char> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void magic(const char (&m)[9]);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void f64s(std::span<const double> v);
  void str(const std::string& s);

  const std::vector<unsigned char>& buffer() const noexcept { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<unsigned char> buf_;
};

/// Every read that would run past the end throws DecodeError with the offset.
class Reader {
 public:
  explicit Reader(std::vector<unsigned char> data) : data_(std::move(data)) {}
  static Reader from_file(const std::filesystem::path& path);

  void expect_magic(const char (&m)[9]);
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  void f64s(std::span<double> out);
  std::string str(std::size_t max_len = 1 << 20);

  std::size_t pos() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == data_.size(); }

 private:
  const unsigned char* need(std::size_t n);

  std::vector<unsigned char> data_;
  std::size_t pos_ = 0;
};

}  // namespace deid::binio
