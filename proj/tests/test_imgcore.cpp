#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "deid/image.hpp"

using namespace deid;
using namespace deid::img;

namespace {

Image random_image(int w, int h, int ch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h, ch);
  for (double& v : img.data()) v = u(rng);
  return img;
}

// Textbook RGB -> HSV in degrees, independent of the library.
std::array<double, 3> hsv_reference(double r, double g, double b) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b}), d = mx - mn;
  double h = 0.0;
  if (d > 0) {
    if (mx == r)
      h = 60.0 * std::fmod((g - b) / d, 6.0);
    else if (mx == g)
      h = 60.0 * ((b - r) / d + 2.0);
    else
      h = 60.0 * ((r - g) / d + 4.0);
  }
  if (h < 0) h += 360.0;
  return {h, mx > 0 ? d / mx : 0.0, mx};
}

}  // namespace

TEST(Image, RejectsBadShapes) {
  EXPECT_THROW(Image(0, 3, 3), InvalidArgument);
  EXPECT_THROW(Image(3, 3, 2), InvalidArgument);
  EXPECT_THROW(Image(2, 2, 1, std::vector<double>(3)), InvalidArgument);
}

TEST(RgbToHsv, GrayHasZeroSaturation) {
  const Image hsv = rgb_to_hsv(Image(1, 1, 3, 0.5));
  EXPECT_EQ(hsv.at(0, 0, 1), 0.0);
  EXPECT_DOUBLE_EQ(hsv.at(0, 0, 2), 0.5);
}

TEST(RgbToHsv, PureRed) {
  Image px(1, 1, 3, 0.0);
  px.at(0, 0, 0) = 1.0;
  const Image hsv = rgb_to_hsv(px);
  EXPECT_EQ(hsv.at(0, 0, 0), 0.0);
  EXPECT_EQ(hsv.at(0, 0, 1), 1.0);
  EXPECT_EQ(hsv.at(0, 0, 2), 1.0);
}

TEST(RgbToHsv, MatchesScalarFormula) {
  Image px(1, 1, 3);
  px.at(0, 0, 0) = 0.5, px.at(0, 0, 1) = 0.25, px.at(0, 0, 2) = 0.125;
  auto check = [](const Image& rgb) {
    const Image hsv = rgb_to_hsv(rgb);
    for (int y = 0; y < rgb.height(); ++y)
      for (int x = 0; x < rgb.width(); ++x) {
        const auto ref = hsv_reference(rgb.at(x, y, 0), rgb.at(x, y, 1), rgb.at(x, y, 2));
        EXPECT_NEAR(hsv.at(x, y, 0), ref[0] / 2.0 / 255.0, 1e-12);
        EXPECT_NEAR(hsv.at(x, y, 1), ref[1], 1e-12);
        EXPECT_NEAR(hsv.at(x, y, 2), ref[2], 1e-12);
      }
  };
  check(px);
  // (0.5,0.25,0.125): hue 20 degrees, saturation 0.75, value 0.5.
  const Image hsv = rgb_to_hsv(px);
  EXPECT_NEAR(hsv.at(0, 0, 0), 10.0 / 255.0, 1e-12);
  EXPECT_NEAR(hsv.at(0, 0, 1), 0.75, 1e-12);
  check(random_image(16, 16, 3, 3));
}

TEST(RgbToHsv, RejectsSingleChannel) { EXPECT_THROW(rgb_to_hsv(Image(2, 2, 1)), InvalidArgument); }

TEST(Crop, FullBoxIsIdentity) {
  const Image img = random_image(7, 5, 3, 1);
  EXPECT_EQ(crop(img, {0, 0, 7, 5}), img);
}

TEST(Crop, SinglePixel) {
  const Image img = random_image(7, 5, 3, 1);
  const Image c = crop(img, {0, 0, 1, 1});
  ASSERT_EQ(c.width(), 1);
  for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(c.at(0, 0, ch), img.at(0, 0, ch));
}

TEST(Crop, CompositionMatchesSingleCrop) {
  const Image img = random_image(20, 18, 3, 2);
  const Image twice = crop(crop(img, {3, 4, 12, 10}), {2, 1, 5, 6});
  EXPECT_EQ(twice, crop(img, {5, 5, 5, 6}));
}

TEST(Crop, ClampsAndRejectsEmpty) {
  const Image img = random_image(10, 10, 1, 2);
  EXPECT_EQ(crop(img, {-3, -3, 6, 6}), crop(img, {0, 0, 3, 3}));
  EXPECT_THROW(crop(img, {10, 10, 4, 4}), InvalidArgument);
}

TEST(ShrinkBbox, Examples) {
  EXPECT_EQ(shrink_bbox({10, 10, 100, 100}, 0.10), (BoundingBox{20, 20, 80, 80}));
  EXPECT_EQ(shrink_bbox({10, 10, 100, 100}, 0.0), (BoundingBox{10, 10, 100, 100}));
  EXPECT_EQ(shrink_bbox({0, 0, 10, 10}, 0.10), (BoundingBox{1, 1, 8, 8}));
  EXPECT_THROW(shrink_bbox({0, 0, 10, 10}, 0.5), InvalidArgument);
  EXPECT_THROW(shrink_bbox({0, 0, 1, 1}, -0.1), InvalidArgument);
}

TEST(ResizeBilinear, Examples) {
  const Image img = random_image(6, 4, 3, 5);
  EXPECT_EQ(resize_bilinear(img, 6, 4), img);
  const Image c = resize_bilinear(Image(3, 3, 3, 0.3), 11, 7);
  for (double v : c.data()) EXPECT_NEAR(v, 0.3, 1e-15);
  Image row(2, 1, 1);
  row.at(1, 0) = 1.0;
  const Image r = resize_bilinear(row, 3, 1);
  EXPECT_DOUBLE_EQ(r.at(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(r.at(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(r.at(2, 0), 1.0);
  EXPECT_THROW(resize_bilinear(img, 0, 3), InvalidArgument);
}

TEST(GaussianBlur, ConstantUnchanged) {
  const Image out = gaussian_blur(Image(9, 7, 3, 0.42), 2.0);
  for (double v : out.data()) EXPECT_NEAR(v, 0.42, 1e-9);
}

TEST(GaussianBlur, TinySigmaIsNearIdentity) {
  const Image img = random_image(12, 12, 3, 9);
  const Image out = gaussian_blur(img, 0.1);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out.data()[i], img.data()[i], 1e-6);
}

TEST(GaussianBlur, ImpulseGivesNormalizedKernel) {
  // Large enough that no window touching the impulse is clipped by the border.
  Image img(41, 41, 1, 0.0);
  img.at(20, 20) = 1.0;
  const double sigma = 1.7;
  const Image out = gaussian_blur(img, sigma);
  double sum = 0.0;
  for (double v : out.data()) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-9);
  // Discrete normalized separable kernel, radius ceil(3 sigma).
  const int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(2 * r + 1);
  double ks = 0;
  for (int i = -r; i <= r; ++i) ks += k[i + r] = std::exp(-i * i / (2 * sigma * sigma));
  for (double& v : k) v /= ks;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) EXPECT_NEAR(out.at(20 + dx, 20 + dy), k[dx + r] * k[dy + r], 1e-12);
  EXPECT_THROW(gaussian_blur(img, 0.0), InvalidArgument);
}

TEST(Pixelate, Examples) {
  const Image img = random_image(5, 7, 3, 4);
  EXPECT_EQ(pixelate(img, 1), img);
  const Image all = pixelate(img, 7);
  for (int c = 0; c < 3; ++c) {
    double mean = 0;
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 5; ++x) mean += img.at(x, y, c);
    mean /= 35;
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 5; ++x) EXPECT_NEAR(all.at(x, y, c), mean, 1e-12);
  }
}

TEST(Pixelate, QuadrantMeans) {
  const Image img = random_image(4, 4, 1, 8);
  const Image out = pixelate(img, 2);
  for (int qy = 0; qy < 2; ++qy)
    for (int qx = 0; qx < 2; ++qx) {
      const double mean = (img.at(2 * qx, 2 * qy) + img.at(2 * qx + 1, 2 * qy) + img.at(2 * qx, 2 * qy + 1) +
                           img.at(2 * qx + 1, 2 * qy + 1)) /
                          4.0;
      for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) EXPECT_NEAR(out.at(2 * qx + x, 2 * qy + y), mean, 1e-15);
    }
}

TEST(Pixelate, PartialEdgeTilesAndIdempotence) {
  const Image img = random_image(10, 9, 3, 6);
  const Image once = pixelate(img, 4);
  EXPECT_EQ(pixelate(once, 4), once);
  // Right edge tile covers columns 8..9, rows 0..3.
  double mean = 0;
  for (int y = 0; y < 4; ++y)
    for (int x = 8; x < 10; ++x) mean += img.at(x, y, 1);
  EXPECT_NEAR(once.at(9, 3, 1), mean / 8, 1e-12);
  EXPECT_THROW(pixelate(img, 0), InvalidArgument);
}

TEST(Morphology, Examples) {
  const Mask ones = make_mask(6, 5, 1.0);
  const Mask e = morphology(ones, MorphOp::erode, 1);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x) {
      const bool border = x == 0 || y == 0 || x == 5 || y == 4;
      EXPECT_EQ(e.at(x, y), border ? 0.0 : 1.0);
    }
  Mask dot = make_mask(5, 5, 0.0);
  dot.at(2, 2) = 1.0;
  const Mask gone = morphology(dot, MorphOp::erode, 1);
  for (double v : gone.data()) EXPECT_EQ(v, 0.0);
}

TEST(Morphology, ExhaustiveThreeByThreeProperties) {
  auto from_bits = [](int bits) {
    Mask m = make_mask(3, 3);
    for (int i = 0; i < 9; ++i) m.data()[i] = (bits >> i) & 1;
    return m;
  };
  auto subset = [](const Mask& a, const Mask& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a.data()[i] > b.data()[i]) return false;
    return true;
  };
  for (int bits = 0; bits < 512; ++bits) {
    const Mask m = from_bits(bits);
    const Mask er = morphology(m, MorphOp::erode, 1), di = morphology(m, MorphOp::dilate, 1);
    EXPECT_TRUE(subset(er, m));
    EXPECT_TRUE(subset(m, di));
    EXPECT_TRUE(subset(morphology(er, MorphOp::dilate, 1), m));
    // Monotone: m ⊆ m | one extra bit.
    for (int extra = 0; extra < 9; ++extra) {
      const Mask sup = from_bits(bits | (1 << extra));
      EXPECT_TRUE(subset(er, morphology(sup, MorphOp::erode, 1)));
      EXPECT_TRUE(subset(di, morphology(sup, MorphOp::dilate, 1)));
    }
  }
}

TEST(GaussianWeightMask, ClosedForm) {
  const BlendKernelSpec spec{60, 60};
  const Mask m = gaussian_weight_mask(spec);
  EXPECT_EQ(m.at(30, 30), 1.0);
  EXPECT_NEAR(m.at(30, 40), std::exp(-0.5), 1e-12);
  EXPECT_NEAR(m.at(0, 0), std::exp(-9.0), 1e-12);
  const BlendKernelSpec rect{40, 64};
  const Mask r = gaussian_weight_mask(rect);
  const double s = 40, sigma = s / 6;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 40; ++x)
      EXPECT_NEAR(r.at(x, y), std::exp(-((x - s / 2) * (x - s / 2) + (y - s / 2) * (y - s / 2)) / (2 * sigma * sigma)),
                  1e-12);
}

TEST(AlphaBlend, ExtremesAndLinearity) {
  const Image a = random_image(8, 6, 3, 11), b = random_image(8, 6, 3, 12);
  EXPECT_EQ(alpha_blend(a, b, make_mask(8, 6, 0.0)), a);
  EXPECT_EQ(alpha_blend(a, b, make_mask(8, 6, 1.0)), b);
  const Image half = alpha_blend(a, b, make_mask(8, 6, 0.5));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(half.data()[i], 0.5 * (a.data()[i] + b.data()[i]), 1e-15);
  Mask m = make_mask(8, 6);
  Mask inv = make_mask(8, 6);
  std::mt19937_64 rng(3);
  for (std::size_t i = 0; i < m.size(); ++i) {
    m.data()[i] = std::uniform_real_distribution<double>(0, 1)(rng);
    inv.data()[i] = 1.0 - m.data()[i];
  }
  const Image x = alpha_blend(a, b, m), y = alpha_blend(b, a, inv);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x.data()[i], y.data()[i], 1e-15);
  EXPECT_THROW(alpha_blend(a, b, make_mask(7, 6)), InvalidArgument);
}

TEST(ImageIo, RoundTrips) {
  const auto dir = std::filesystem::temp_directory_path() / "deid_test_imgcore";
  std::filesystem::create_directories(dir);
  Image exact(5, 4, 3);
  for (std::size_t i = 0; i < exact.size(); ++i) exact.data()[i] = static_cast<double>((i * 37) % 256) / 255.0;
  save_image(exact, dir / "exact.ppm");
  EXPECT_EQ(load_image(dir / "exact.ppm"), exact);

  const Image any = random_image(9, 7, 1, 21);
  save_image(any, dir / "any.pgm");
  const Image back = load_image(dir / "any.pgm");
  for (std::size_t i = 0; i < any.size(); ++i) EXPECT_LE(std::abs(back.data()[i] - any.data()[i]), 1.0 / 510 + 1e-12);
  std::filesystem::remove_all(dir);
}

TEST(ImageIo, TruncatedFileReportsOffset) {
  auto bytes = encode_pnm(random_image(4, 4, 3, 2));
  bytes.resize(bytes.size() - 5);
  try {
    decode_pnm(bytes);
    FAIL() << "expected DecodeError";
  } catch (const DecodeError& e) {
    EXPECT_NE(e.offset(), DecodeError::npos);
    EXPECT_LE(e.offset(), bytes.size());
  }
  const std::vector<unsigned char> garbage{'P', '7', '\n'};
  EXPECT_THROW(decode_pnm(garbage), DecodeError);
}
