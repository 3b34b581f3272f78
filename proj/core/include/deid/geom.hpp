#pragma once

// Perspective geometry: DLT homography estimation, seeded consensus fitting,
// and inverse-mapped warping of images and masks.

#include <cstdint>
#include <span>
#include <vector>

#include "deid/error.hpp"
#include "deid/image.hpp"
#include "deid/linalg.hpp"

namespace deid::geom {

class DegenerateError : public Error {
 public:
  using Error::Error;
};

class NoConsensusError : public Error {
 public:
  using Error::Error;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

double distance(const Point2& a, const Point2& b);

/// 3x3 projective transform, row-major, normalized so that the bottom-right
/// entry is 1.
class Homography {
 public:
  Homography();  // identity
  /// Normalizes by m[8]; throws DegenerateError if m[8] is ~0 or |det| <= 1e-12.
  explicit Homography(const linalg::Mat3& m);

  static Homography translation(double dx, double dy);

  const linalg::Mat3& matrix() const noexcept { return m_; }
  double operator()(int r, int c) const noexcept { return m_[r * 3 + c]; }

  Homography inverse() const;
  /// (*this) after `first`: x -> this(first(x)).
  Homography compose(const Homography& first) const;

 private:
  linalg::Mat3 m_;
};

/// Applies H with perspective division. Throws DegenerateError when the
/// homogeneous coordinate vanishes.
Point2 apply_homography(const Point2& p, const Homography& h);

/// Least-squares DLT with Hartley normalization (centroid at the origin, mean
/// distance sqrt(2)). Solved through the 9x9 normal matrix. Throws
/// InvalidArgument for fewer than 4 pairs and DegenerateError when the
/// solution is not unique.
Homography estimate_homography_dlt(std::span<const Point2> src, std::span<const Point2> dst);

struct RobustFitConfig {
  int iterations = 500;
  double inlier_threshold = 2.0;  // pixels
  std::uint64_t seed = 0;
};

struct RobustFit {
  Homography h;
  std::vector<int> inliers;  // ascending
};

/// Consensus fit with minimal samples of 4. The best model maximizes the inlier
/// count (ties: smaller summed inlier reprojection error) and is then refit by
/// DLT on all of its inliers. When C(n,4) <= iterations every subset is tried
/// in lexicographic order; otherwise subsets are drawn from a generator seeded
/// with cfg.seed.
RobustFit robust_homography(std::span<const Point2> src, std::span<const Point2> dst,
                            const RobustFitConfig& cfg = {});

/// Output pixel (x,y) is pulled from H^-1 (x,y) with bilinear sampling; samples
/// whose source coordinate falls outside [0,w-1]x[0,h-1] take `fill`.
img::Image warp_image(const img::Image& src, const Homography& h, int out_w, int out_h, double fill);

}  // namespace deid::geom
