#include "deid/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace deid::img {

namespace {

void check_dims(int width, int height, int channels) {
  if (width < 1 || height < 1)
    throw InvalidArgument("image dimensions must be >= 1, got " + std::to_string(width) + "x" +
                          std::to_string(height));
  if (channels != 1 && channels != 3)
    throw InvalidArgument("image channels must be 1 or 3, got " + std::to_string(channels));
}

std::vector<double> gaussian_taps(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i)
    taps[i + radius] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
  return taps;
}

}  // namespace

Image::Image(int width, int height, int channels, double fill) {
  check_dims(width, height, channels);
  width_ = width;
  height_ = height;
  channels_ = channels;
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image::Image(int width, int height, int channels, std::vector<double> data) {
  check_dims(width, height, channels);
  if (data.size() != static_cast<std::size_t>(width) * height * channels)
    throw InvalidArgument("image data length does not match dimensions");
  width_ = width;
  height_ = height;
  channels_ = channels;
  data_ = std::move(data);
}

bool is_valid(const Image& img) noexcept {
  return std::all_of(img.data().begin(), img.data().end(),
                     [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; });
}

Image rgb_to_hsv(const Image& rgb) {
  if (rgb.channels() != 3)
    throw InvalidArgument("rgb_to_hsv: expected 3 channels, got " + std::to_string(rgb.channels()));
  Image out(rgb.width(), rgb.height(), 3);
  const auto src = rgb.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); i += 3) {
    const double r = src[i], g = src[i + 1], b = src[i + 2];
    const double vmax = std::max({r, g, b});
    const double vmin = std::min({r, g, b});
    const double delta = vmax - vmin;
    double hue_deg = 0.0;
    if (delta > 0.0) {
      if (vmax == r)
        hue_deg = 60.0 * (g - b) / delta;
      else if (vmax == g)
        hue_deg = 120.0 + 60.0 * (b - r) / delta;
      else
        hue_deg = 240.0 + 60.0 * (r - g) / delta;
      if (hue_deg < 0.0) hue_deg += 360.0;
    }
    dst[i] = (hue_deg / 2.0) / 255.0;
    dst[i + 1] = vmax > 0.0 ? delta / vmax : 0.0;
    dst[i + 2] = vmax;
  }
  return out;
}

BoundingBox clamp_box(const BoundingBox& box, int width, int height) {
  const int x0 = std::clamp(box.x, 0, width);
  const int y0 = std::clamp(box.y, 0, height);
  const int x1 = std::clamp(box.x + box.w, 0, width);
  const int y1 = std::clamp(box.y + box.h, 0, height);
  return {x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
}

Image crop(const Image& img, const BoundingBox& box) {
  const BoundingBox b = clamp_box(box, img.width(), img.height());
  if (b.w < 1 || b.h < 1) throw InvalidArgument("crop: box does not intersect the image");
  Image out(b.w, b.h, img.channels());
  const int ch = img.channels();
  for (int y = 0; y < b.h; ++y) {
    const double* row = &img.data()[(static_cast<std::size_t>(b.y + y) * img.width() + b.x) * ch];
    std::copy(row, row + static_cast<std::size_t>(b.w) * ch,
              out.data().begin() + static_cast<std::ptrdiff_t>(y) * b.w * ch);
  }
  return out;
}

BoundingBox shrink_bbox(const BoundingBox& box, double fraction) {
  if (!(fraction >= 0.0 && fraction < 0.5))
    throw InvalidArgument("shrink_bbox: fraction must be in [0, 0.5)");
  const int dx = static_cast<int>(std::floor(fraction * box.w));
  const int dy = static_cast<int>(std::floor(fraction * box.h));
  BoundingBox out{box.x + dx, box.y + dy, box.w - 2 * dx, box.h - 2 * dy};
  if (out.w < 1 || out.h < 1) throw InvalidArgument("shrink_bbox: result would be empty");
  return out;
}

BoundingBox grow_bbox(const BoundingBox& box, double fraction) {
  if (fraction < 0.0) throw InvalidArgument("grow_bbox: fraction must be >= 0");
  const int dx = static_cast<int>(std::floor(fraction * box.w));
  const int dy = static_cast<int>(std::floor(fraction * box.h));
  return {box.x - dx, box.y - dy, box.w + 2 * dx, box.h + 2 * dy};
}

double sample_bilinear(const Image& img, double x, double y, int c) {
  const int w = img.width(), h = img.height();
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  x0 = std::clamp(x0, 0, std::max(0, w - 2));
  y0 = std::clamp(y0, 0, std::max(0, h - 2));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = img.at(x0, y0, c) * (1.0 - fx) + img.at(x1, y0, c) * fx;
  const double bot = img.at(x0, y1, c) * (1.0 - fx) + img.at(x1, y1, c) * fx;
  return top * (1.0 - fy) + bot * fy;
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw InvalidArgument("resize_bilinear: output dims must be >= 1");
  if (out_w == img.width() && out_h == img.height()) return img;
  Image out(out_w, out_h, img.channels());
  const double sx = out_w > 1 ? static_cast<double>(img.width() - 1) / (out_w - 1) : 0.0;
  const double sy = out_h > 1 ? static_cast<double>(img.height() - 1) / (out_h - 1) : 0.0;
  for (int y = 0; y < out_h; ++y) {
    const double fy = y * sy;
    for (int x = 0; x < out_w; ++x) {
      const double fx = x * sx;
      for (int c = 0; c < img.channels(); ++c) {
        const double v = sample_bilinear(img, fx, fy, c);
        out.at(x, y, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("gaussian_blur: sigma must be > 0");
  const std::vector<double> taps = gaussian_taps(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  const int w = img.width(), h = img.height(), ch = img.channels();

  Image tmp(w, h, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0, norm = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int xx = x + k;
          if (xx < 0 || xx >= w) continue;
          acc += taps[k + radius] * img.at(xx, y, c);
          norm += taps[k + radius];
        }
        tmp.at(x, y, c) = acc / norm;
      }

  Image out(w, h, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0, norm = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int yy = y + k;
          if (yy < 0 || yy >= h) continue;
          acc += taps[k + radius] * tmp.at(x, yy, c);
          norm += taps[k + radius];
        }
        out.at(x, y, c) = std::clamp(acc / norm, 0.0, 1.0);
      }
  return out;
}

Image pixelate(const Image& img, int block) {
  if (block < 1) throw InvalidArgument("pixelate: block must be >= 1");
  if (block == 1) return img;
  const int w = img.width(), h = img.height(), ch = img.channels();
  Image out(w, h, ch);
  for (int ty = 0; ty < h; ty += block) {
    const int y1 = std::min(ty + block, h);
    for (int tx = 0; tx < w; tx += block) {
      const int x1 = std::min(tx + block, w);
      const double count = static_cast<double>(y1 - ty) * (x1 - tx);
      for (int c = 0; c < ch; ++c) {
        double sum = 0.0, lo = img.at(tx, ty, c), hi = lo;
        for (int y = ty; y < y1; ++y)
          for (int x = tx; x < x1; ++x) {
            const double v = img.at(x, y, c);
            sum += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
          }
        // A constant tile keeps its value exactly, so repeated pixelation is a no-op.
        const double mean = lo == hi ? lo : std::clamp(sum / count, 0.0, 1.0);
        for (int y = ty; y < y1; ++y)
          for (int x = tx; x < x1; ++x) out.at(x, y, c) = mean;
      }
    }
  }
  return out;
}

Mask morphology(const Mask& mask, MorphOp op, int radius) {
  if (mask.channels() != 1) throw InvalidArgument("morphology: mask must have 1 channel");
  if (radius < 1) throw InvalidArgument("morphology: radius must be >= 1");
  const int w = mask.width(), h = mask.height();
  std::vector<unsigned char> bin(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < bin.size(); ++i) bin[i] = mask.data()[i] >= 0.5 ? 1 : 0;

  auto get = [&](int x, int y) -> unsigned char {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0;
    return bin[static_cast<std::size_t>(y) * w + x];
  };

  Mask out(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool result = (op == MorphOp::erode);
      for (int dy = -radius; dy <= radius && result == (op == MorphOp::erode); ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const bool v = get(x + dx, y + dy) != 0;
          if (op == MorphOp::erode && !v) {
            result = false;
            break;
          }
          if (op == MorphOp::dilate && v) {
            result = true;
            break;
          }
        }
      out.at(x, y) = result ? 1.0 : 0.0;
    }
  return out;
}

Mask gaussian_weight_mask(const BlendKernelSpec& spec) {
  if (spec.w < 1 || spec.h < 1) throw InvalidArgument("gaussian_weight_mask: empty spec");
  const double mx = spec.mu_x(), my = spec.mu_y(), sigma = spec.sigma();
  const double denom = 2.0 * sigma * sigma;
  Mask out(spec.w, spec.h, 1);
  for (int y = 0; y < spec.h; ++y)
    for (int x = 0; x < spec.w; ++x) {
      const double dx = x - mx, dy = y - my;
      out.at(x, y) = std::exp(-(dx * dx + dy * dy) / denom);
    }
  return out;
}

Image alpha_blend(const Image& original, const Image& synthetic, const Mask& mask) {
  if (!original.same_shape(synthetic))
    throw InvalidArgument("alpha_blend: original and synthetic differ in shape");
  if (mask.channels() != 1 || mask.width() != original.width() || mask.height() != original.height())
    throw InvalidArgument("alpha_blend: mask does not match image dimensions");
  Image out = original;
  const int ch = original.channels();
  const auto m = mask.data();
  const auto s = synthetic.data();
  auto o = out.data();
  for (std::size_t p = 0; p < m.size(); ++p) {
    const double a = m[p];
    if (a == 0.0) continue;
    for (int c = 0; c < ch; ++c) {
      const std::size_t i = p * ch + c;
      o[i] = a * s[i] + (1.0 - a) * o[i];
    }
  }
  return out;
}

Mask multiply(const Mask& a, const Mask& b) {
  if (!a.same_shape(b) || a.channels() != 1) throw InvalidArgument("multiply: mask shapes differ");
  Mask out = a;
  auto o = out.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return out;
}

}  // namespace deid::img
