#pragma once

// Pixel-level primitives. Images are row-major, channel-interleaved grids of
// doubles in [0,1]; 8-bit quantization happens only in image_io.

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "deid/error.hpp"

namespace deid::img {

class Image {
 public:
  Image() = default;
  /// Throws InvalidArgument unless width, height >= 1 and channels is 1 or 3.
  Image(int width, int height, int channels, double fill = 0.0);
  Image(int width, int height, int channels, std::vector<double> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool same_shape(const Image& o) const noexcept {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }
  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Single-channel image used as a per-pixel weight.
using Mask = Image;

inline Mask make_mask(int width, int height, double fill = 0.0) {
  return Mask(width, height, 1, fill);
}

struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int right() const noexcept { return x + w; }   // exclusive
  int bottom() const noexcept { return y + h; }  // exclusive
  bool contains(const BoundingBox& o) const noexcept {
    return o.x >= x && o.y >= y && o.right() <= right() && o.bottom() <= bottom();
  }
  bool operator==(const BoundingBox&) const = default;
};

/// Gaussian blending kernel parameters derived from the generated image
/// dimensions: s = min(w,h), centre (s/2, s/2), sigma = s/6.
struct BlendKernelSpec {
  int w = 0;
  int h = 0;

  double side() const noexcept { return w < h ? w : h; }
  double mu_x() const noexcept { return side() / 2.0; }
  double mu_y() const noexcept { return side() / 2.0; }
  double sigma() const noexcept { return side() / 6.0; }
};

/// True when every sample is finite and inside [0,1].
bool is_valid(const Image& img) noexcept;

/// One-way RGB -> HSV. Output channel 0 is hue with the full circle mapped to
/// 180/255 of the unit range (the 8-bit [0,180) convention), channels 1 and 2
/// are saturation and value in [0,1].
Image rgb_to_hsv(const Image& rgb);

/// Clamps `box` to the image and copies the region. Throws InvalidArgument when
/// the clamped region is empty.
Image crop(const Image& img, const BoundingBox& box);
BoundingBox clamp_box(const BoundingBox& box, int width, int height);

/// Moves every side inward by floor(fraction * side length).
BoundingBox shrink_bbox(const BoundingBox& box, double fraction);

/// Grows every side outward by floor(fraction * side length).
BoundingBox grow_bbox(const BoundingBox& box, double fraction);

/// Bilinear resampling with corner-aligned sampling: output pixel u maps to
/// source coordinate u * (src - 1) / (out - 1), so the four corner pixels of
/// input and output coincide. A 1-pixel output axis samples source index 0.
Image resize_bilinear(const Image& img, int out_w, int out_h);

/// Bilinear lookup at a real coordinate; caller guarantees 0 <= x <= w-1 and
/// 0 <= y <= h-1.
double sample_bilinear(const Image& img, double x, double y, int c);

/// Separable Gaussian blur. Kernel radius ceil(3 sigma); taps falling outside
/// the image are dropped and the remaining weights renormalized.
Image gaussian_blur(const Image& img, double sigma);

/// Replaces each block x block tile (anchored at the origin) with its mean.
/// Tiles cut by the right/bottom edge use the mean of the pixels they cover.
Image pixelate(const Image& img, int block);

enum class MorphOp { erode, dilate };

/// Binary min/max filter with a square (2r+1)^2 structuring element. The input
/// is thresholded at 0.5 first; out-of-bounds pixels count as 0.
Mask morphology(const Mask& mask, MorphOp op, int radius);

/// exp(-((x-mu_x)^2 + (y-mu_y)^2) / (2 sigma^2)) at integer pixel coordinates.
Mask gaussian_weight_mask(const BlendKernelSpec& spec);

/// out = mask * synthetic + (1 - mask) * original. Pixels with mask == 0 are
/// copied from `original` bit-for-bit.
Image alpha_blend(const Image& original, const Image& synthetic, const Mask& mask);

/// Elementwise product of two masks of equal size.
Mask multiply(const Mask& a, const Mask& b);

/// Applies `f` to the region `box` of `img` (e.g. pixelate or blur just the
/// face) and writes the result back in place.
template <typename Fn>
Image apply_in_region(const Image& img, const BoundingBox& box, Fn&& f) {
  const BoundingBox b = clamp_box(box, img.width(), img.height());
  Image region = f(crop(img, b));
  Image out = img;
  for (int y = 0; y < b.h; ++y)
    for (int x = 0; x < b.w; ++x)
      for (int c = 0; c < img.channels(); ++c) out.at(b.x + x, b.y + y, c) = region.at(x, y, c);
  return out;
}

// --- file boundary -------------------------------------------------------

/// Loads a binary PGM/PPM (P5/P6, maxval 255). Throws DecodeError carrying the
/// byte offset of the first malformed byte; never returns a partial image.
Image load_image(const std::filesystem::path& path);
Image decode_pnm(std::span<const unsigned char> bytes);

/// Writes P6 for 3-channel and P5 for 1-channel images, rounding to 8 bits.
void save_image(const Image& img, const std::filesystem::path& path);
std::vector<unsigned char> encode_pnm(const Image& img);

}  // namespace deid::img
