#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "deid/image.hpp"

namespace deid::img {

namespace {

class PnmReader {
 public:
  explicit PnmReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const unsigned char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int read_uint(const char* field) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size())
      throw DecodeError(std::string("pnm: unexpected end of header reading ") + field, pos_);
    if (!std::isdigit(bytes_[pos_]))
      throw DecodeError(std::string("pnm: expected digit for ") + field, pos_);
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) throw DecodeError(std::string("pnm: ") + field + " too large", pos_);
      ++pos_;
    }
    return static_cast<int>(value);
  }

  void expect_single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_]))
      throw DecodeError("pnm: expected whitespace after maxval", pos_);
    ++pos_;
  }

  std::span<const unsigned char> take(std::size_t n) {
    if (bytes_.size() - pos_ < n)
      throw DecodeError("pnm: truncated pixel data, expected " + std::to_string(n) + " bytes, have " +
                            std::to_string(bytes_.size() - pos_),
                        bytes_.size());
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image decode_pnm(std::span<const unsigned char> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw DecodeError("pnm: bad magic, expected P5 or P6", 0);
  const int channels = bytes[1] == '6' ? 3 : 1;
  PnmReader r(bytes.subspan(0));
  r.take(2);
  const int width = r.read_uint("width");
  const int height = r.read_uint("height");
  const std::size_t maxval_pos = r.pos();
  const int maxval = r.read_uint("maxval");
  if (width < 1 || height < 1) throw DecodeError("pnm: zero image dimension", maxval_pos);
  if (maxval != 255) throw DecodeError("pnm: only maxval 255 is supported", maxval_pos);
  r.expect_single_whitespace();
  const auto pixels = r.take(static_cast<std::size_t>(width) * height * channels);
  std::vector<double> data(pixels.size());
  std::transform(pixels.begin(), pixels.end(), data.begin(),
                 [](unsigned char v) { return v / 255.0; });
  return Image(width, height, channels, std::move(data));
}

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_pnm(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

std::vector<unsigned char> encode_pnm(const Image& img) {
  if (img.empty()) throw InvalidArgument("encode_pnm: empty image");
  const std::string header = std::string(img.channels() == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(img.width()) + " " + std::to_string(img.height()) +
                             "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(header.size() + img.size());
  for (double v : img.data()) {
    const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    out.push_back(static_cast<unsigned char>(q));
  }
  return out;
}

void save_image(const Image& img, const std::filesystem::path& path) {
  const auto bytes = encode_pnm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace deid::img
