#include "deid/geom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace deid::geom {

namespace {

constexpr double kDegenerateRatio = 1e-10;

struct Normalization {
  linalg::Mat3 t;  // maps raw -> normalized
  std::vector<Point2> points;
};

Normalization hartley_normalize(std::span<const Point2> pts) {
  double cx = 0.0, cy = 0.0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= pts.size();
  cy /= pts.size();
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
  mean_dist /= pts.size();
  if (!(mean_dist > 0.0)) throw DegenerateError("homography: all points coincide");
  const double s = std::sqrt(2.0) / mean_dist;
  Normalization n;
  n.t = {s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0};
  n.points.reserve(pts.size());
  for (const auto& p : pts) n.points.push_back({s * (p.x - cx), s * (p.y - cy)});
  return n;
}

double reprojection_error(const Homography& h, const Point2& src, const Point2& dst) {
  const auto& m = h.matrix();
  const double w = m[6] * src.x + m[7] * src.y + m[8];
  if (std::abs(w) < 1e-12) return std::numeric_limits<double>::infinity();
  const double x = (m[0] * src.x + m[1] * src.y + m[2]) / w;
  const double y = (m[3] * src.x + m[4] * src.y + m[5]) / w;
  return std::hypot(x - dst.x, y - dst.y);
}

bool next_combination(std::vector<int>& idx, int n) {
  const int k = static_cast<int>(idx.size());
  int i = k - 1;
  while (i >= 0 && idx[i] == n - k + i) --i;
  if (i < 0) return false;
  ++idx[i];
  for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  return true;
}

std::uint64_t choose4(std::uint64_t n) {
  if (n < 4) return 0;
  return n * (n - 1) * (n - 2) * (n - 3) / 24;
}

}  // namespace

double distance(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

Homography::Homography() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

Homography::Homography(const linalg::Mat3& m) : m_(m) {
  if (!(std::abs(m[8]) > 1e-15)) throw DegenerateError("homography: bottom-right entry is zero");
  for (double& v : m_) v /= m[8];
  for (double v : m_)
    if (!std::isfinite(v)) throw DegenerateError("homography: non-finite entry");
  if (!(std::abs(linalg::determinant(m_)) > 1e-12)) throw DegenerateError("homography: singular matrix");
}

Homography Homography::translation(double dx, double dy) {
  return Homography({1, 0, dx, 0, 1, dy, 0, 0, 1});
}

Homography Homography::inverse() const { return Homography(linalg::inverse(m_)); }

Homography Homography::compose(const Homography& first) const {
  return Homography(linalg::multiply(m_, first.m_));
}

Point2 apply_homography(const Point2& p, const Homography& h) {
  const auto& m = h.matrix();
  const double w = m[6] * p.x + m[7] * p.y + m[8];
  if (std::abs(w) < 1e-12) throw DegenerateError("apply_homography: point maps to infinity");
  return {(m[0] * p.x + m[1] * p.y + m[2]) / w, (m[3] * p.x + m[4] * p.y + m[5]) / w};
}

Homography estimate_homography_dlt(std::span<const Point2> src, std::span<const Point2> dst) {
  if (src.size() != dst.size()) throw InvalidArgument("homography: point lists differ in length");
  if (src.size() < 4) throw InvalidArgument("homography: need at least 4 correspondences");

  const Normalization ns = hartley_normalize(src);
  const Normalization nd = hartley_normalize(dst);

  std::vector<double> ata(81, 0.0);
  auto accumulate = [&](const std::array<double, 9>& row) {
    for (int r = 0; r < 9; ++r) {
      if (row[r] == 0.0) continue;
      for (int c = 0; c < 9; ++c) ata[r * 9 + c] += row[r] * row[c];
    }
  };
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double x = ns.points[i].x, y = ns.points[i].y;
    const double u = nd.points[i].x, v = nd.points[i].y;
    accumulate({-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u});
    accumulate({0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v});
  }

  const auto eig = linalg::symmetric_eigen(std::move(ata), 9);
  if (!(eig.values[1] > kDegenerateRatio * eig.values[8]))
    throw DegenerateError("homography: degenerate point configuration");

  linalg::Mat3 hn{};
  for (int i = 0; i < 9; ++i) hn[i] = eig.vectors[static_cast<std::size_t>(i) * 9 + 0];

  const linalg::Mat3 td_inv = linalg::inverse(nd.t);
  return Homography(linalg::multiply(td_inv, linalg::multiply(hn, ns.t)));
}

RobustFit robust_homography(std::span<const Point2> src, std::span<const Point2> dst,
                            const RobustFitConfig& cfg) {
  if (src.size() != dst.size()) throw InvalidArgument("robust_homography: point lists differ in length");
  if (src.size() < 4) throw InvalidArgument("robust_homography: need at least 4 correspondences");
  if (cfg.iterations < 1) throw InvalidArgument("robust_homography: iterations must be >= 1");
  if (!(cfg.inlier_threshold > 0.0)) throw InvalidArgument("robust_homography: threshold must be > 0");

  const int n = static_cast<int>(src.size());
  std::vector<int> best_inliers;
  double best_error = std::numeric_limits<double>::infinity();

  std::array<Point2, 4> s4, d4;
  auto evaluate = [&](const std::vector<int>& sample) {
    for (int k = 0; k < 4; ++k) {
      s4[k] = src[sample[k]];
      d4[k] = dst[sample[k]];
    }
    Homography h;
    try {
      h = estimate_homography_dlt(s4, d4);
    } catch (const DegenerateError&) {
      return;
    }
    std::vector<int> inliers;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = reprojection_error(h, src[i], dst[i]);
      if (e < cfg.inlier_threshold) {
        inliers.push_back(i);
        total += e;
      }
    }
    if (inliers.size() > best_inliers.size() ||
        (inliers.size() == best_inliers.size() && total < best_error)) {
      best_inliers = std::move(inliers);
      best_error = total;
    }
  };

  std::vector<int> sample(4);
  if (choose4(n) <= static_cast<std::uint64_t>(cfg.iterations)) {
    std::iota(sample.begin(), sample.end(), 0);
    do {
      evaluate(sample);
    } while (next_combination(sample, n));
  } else {
    std::mt19937_64 rng(cfg.seed);
    std::vector<int> pool(n);
    for (int it = 0; it < cfg.iterations; ++it) {
      std::iota(pool.begin(), pool.end(), 0);
      for (int k = 0; k < 4; ++k) {
        std::uniform_int_distribution<int> pick(k, n - 1);
        std::swap(pool[k], pool[pick(rng)]);
        sample[k] = pool[k];
      }
      evaluate(sample);
    }
  }

  if (best_inliers.size() < 4) throw NoConsensusError("robust_homography: no model with >= 4 inliers");

  std::vector<Point2> si, di;
  for (int i : best_inliers) {
    si.push_back(src[i]);
    di.push_back(dst[i]);
  }
  return {estimate_homography_dlt(si, di), best_inliers};
}

img::Image warp_image(const img::Image& src, const Homography& h, int out_w, int out_h, double fill) {
  if (out_w < 1 || out_h < 1) throw InvalidArgument("warp_image: output dims must be >= 1");
  const Homography inv = h.inverse();
  const auto& m = inv.matrix();
  const int ch = src.channels();
  const double max_x = src.width() - 1, max_y = src.height() - 1;
  constexpr double eps = 1e-9;
  img::Image out(out_w, out_h, ch, fill);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const double w = m[6] * x + m[7] * y + m[8];
      if (std::abs(w) < 1e-12) continue;
      double sx = (m[0] * x + m[1] * y + m[2]) / w;
      double sy = (m[3] * x + m[4] * y + m[5]) / w;
      if (sx < -eps || sy < -eps || sx > max_x + eps || sy > max_y + eps) continue;
      sx = std::clamp(sx, 0.0, max_x);
      sy = std::clamp(sy, 0.0, max_y);
      for (int c = 0; c < ch; ++c) out.at(x, y, c) = img::sample_bilinear(src, sx, sy, c);
    }
  return out;
}

}  // namespace deid::geom
