#include "deid/synthface.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace deid::synth {

namespace {

// Vertical layout in face-local coordinates (origin at the face centre, y down).
constexpr double kEyeRow = -3.0;
constexpr double kBrowGap = 3.0;
constexpr double kBrowHalfLength = 4.0;
constexpr double kBrowThickness = 1.0;
constexpr double kNoseRow = 5.0;
constexpr double kNoseRadius = 1.8;
constexpr double kMouthRow = 12.0;
constexpr double kLipThickness = 1.2;
constexpr double kSurprisedHalfHeight = 3.5;
constexpr double kNeckHalfWidth = 6.5;
constexpr double kClothingRow = 34.0;

constexpr double kBackground = 0.5;

constexpr std::array<double, 1> kHairHues{28.0};
constexpr std::array<double, 1> kHairVals{0.35};
constexpr std::array<double, 3> kIrisHues{25.0, 110.0, 210.0};
constexpr std::array<double, 3> kClothingHues{0.0, 120.0, 210.0};

struct ExpressionShape {
  double mouth_curve;  // offset of the mouth centre from the corner row
  double brow_delta;   // degrees added to the identity's brow angle
  double brow_raise;   // px, negative moves the brows up
  bool open_mouth;
};

ExpressionShape shape_of(Expression e) {
  switch (e) {
    case Expression::neutral: return {0.0, 0.0, 0.0, false};
    case Expression::happy: return {3.0, -4.0, 0.0, false};
    case Expression::angry: return {-2.0, 14.0, 0.5, false};
    case Expression::surprised: return {0.0, 0.0, -1.5, true};
  }
  throw InvalidArgument("unknown expression");
}

// splitmix64: a tiny, fully specified generator so identity parameters do not
// depend on the standard library's distribution implementations.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : s_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (s_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * (static_cast<double>(next() >> 11) * 0x1.0p-53); }
  int pick(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }

 private:
  std::uint64_t s_;
};

struct Rgb {
  double r, g, b;
};

Rgb hsv_to_rgb(double h_deg, double s, double v) {
  h_deg = std::fmod(h_deg, 360.0);
  if (h_deg < 0) h_deg += 360.0;
  const double c = v * s;
  const double hp = h_deg / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

double sq(double v) { return v * v; }

double face_half_height(const IdentityParams& p) { return p.face_half_width * p.face_aspect; }

double brow_row(const IdentityParams& p) { return kEyeRow - p.eye_radius - kBrowGap; }

double hairline_row(const IdentityParams& p, double u) {
  const double base = -face_half_height(p) + 4.0;
  switch (p.hairline) {
    case 1: return base + 2.0 * std::max(0.0, 1.0 - std::abs(u) / 5.0);
    case 2: return base + (u + p.face_half_width) / p.face_half_width;
    default: return base;
  }
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double t = std::clamp(((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
  return std::hypot(px - (ax + t * dx), py - (ay + t * dy));
}

struct Palette {
  Rgb skin, nose, hair, brow, iris, pupil, lip, clothing, background;
};

Palette palette_of(const IdentityParams& p) {
  return {hsv_to_rgb(p.skin_hue, p.skin_sat, p.skin_val),
          hsv_to_rgb(p.skin_hue, p.skin_sat * 1.1, p.skin_val * 0.8),
          hsv_to_rgb(p.hair_hue, 0.55, p.hair_val),
          hsv_to_rgb(p.hair_hue, 0.55, p.hair_val * 0.7),
          hsv_to_rgb(p.iris_hue, 0.6, 0.55),
          {0.1, 0.1, 0.1},
          hsv_to_rgb(355.0, 0.6, 0.7),
          hsv_to_rgb(p.clothing_hue, 0.5, 0.6),
          {kBackground, kBackground, kBackground}};
}

/// Colour at face-local point (u, v) before illumination.
Rgb shade(const IdentityParams& p, const Palette& pal, const ExpressionShape& ex, double u, double v) {
  const double hw = p.face_half_width, hh = face_half_height(p);
  Rgb out = pal.background;

  if (std::abs(u) <= kNeckHalfWidth && v >= 0.0) out = pal.skin;
  if (v >= kClothingRow && std::abs(u) <= 30.0 + (v - kClothingRow) * 1.5) out = pal.clothing;
  const bool in_hair_cap = v < 8.0 && sq(u / (hw + 3.5)) + sq((v + 3.0) / (hh + 4.5)) <= 1.0;
  if (in_hair_cap) out = pal.hair;

  if (sq(u / hw) + sq(v / hh) > 1.0) return out;
  if (in_hair_cap && v < hairline_row(p, u)) return pal.hair;
  out = pal.skin;

  // Brows: segments centred above each eye, outer end raised by the angle.
  const double by = brow_row(p) + ex.brow_raise;
  const double theta = (p.brow_angle + ex.brow_delta) * std::numbers::pi / 180.0;
  const double cx = std::cos(theta) * kBrowHalfLength, cy = std::sin(theta) * kBrowHalfLength;
  for (double side : {-1.0, 1.0}) {
    const double bx = side * p.eye_spacing;
    // Outer end is further from the centre line and higher up when theta > 0.
    if (segment_distance(u, v, bx - side * cx, by + cy, bx + side * cx, by - cy) <= kBrowThickness) return pal.brow;
  }

  for (double side : {-1.0, 1.0}) {
    const double d = std::hypot(u - side * p.eye_spacing, v - kEyeRow);
    if (d <= 0.45 * p.eye_radius) return pal.pupil;
    if (d <= p.eye_radius) return pal.iris;
  }

  if (std::hypot(u, v - kNoseRow) <= kNoseRadius) return pal.nose;

  const double mw = p.mouth_half_width;
  if (ex.open_mouth) {
    const double r = sq(u / mw) + sq((v - kMouthRow) / kSurprisedHalfHeight);
    if (r <= 1.0) return pal.lip;
  } else if (std::abs(u) <= mw) {
    const double curve = kMouthRow + ex.mouth_curve * (1.0 - sq(u / mw));
    if (std::abs(v - curve) <= kLipThickness) return pal.lip;
  }
  return out;
}

struct PoseMap {
  double cx, cy, squash, shear;

  geom::Point2 forward(double u, double v) const { return {cx + squash * u + shear * v, cy + v}; }
  void inverse(double x, double y, double& u, double& v) const {
    v = y - cy;
    u = (x - cx - shear * v) / squash;
  }
};

PoseMap pose_map(Pose pose, const RenderConfig& cfg) {
  const double c = cfg.frame_size / 2.0;
  if (pose == Pose::profile) return {c + cfg.profile_shift, c, cfg.profile_squash, cfg.profile_shear};
  return {c, c, 1.0, 0.0};
}

img::BoundingBox bounds_of(const PoseMap& pm, double u0, double v0, double u1, double v1, double pad) {
  double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
  for (double u : {u0, u1})
    for (double v : {v0, v1}) {
      const auto q = pm.forward(u, v);
      xmin = std::min(xmin, q.x), xmax = std::max(xmax, q.x);
      ymin = std::min(ymin, q.y), ymax = std::max(ymax, q.y);
    }
  const int x = static_cast<int>(std::floor(xmin - pad)), y = static_cast<int>(std::floor(ymin - pad));
  return {x, y, static_cast<int>(std::ceil(xmax + pad)) - x + 1, static_cast<int>(std::ceil(ymax + pad)) - y + 1};
}

}  // namespace

std::string to_string(Expression e) {
  switch (e) {
    case Expression::neutral: return "neutral";
    case Expression::happy: return "happy";
    case Expression::angry: return "angry";
    case Expression::surprised: return "surprised";
  }
  return "?";
}

std::string to_string(Pose p) { return p == Pose::frontal ? "frontal" : "profile"; }

Expression parse_expression(const std::string& s) {
  for (auto e : kAllExpressions)
    if (to_string(e) == s) return e;
  throw InvalidArgument("unknown expression '" + s + "' (expected neutral, happy, angry or surprised)");
}

Pose parse_pose(const std::string& s) {
  if (s == "frontal") return Pose::frontal;
  if (s == "profile") return Pose::profile;
  throw InvalidArgument("unknown pose '" + s + "' (expected frontal or profile)");
}

IdentityParams identity_params(std::uint64_t seed, int index) {
  if (index < 0) throw InvalidArgument("identity index must be >= 0");
  Stream rng(seed * 0x100000001B3ull ^ (static_cast<std::uint64_t>(index) + 1) * 0xD6E8FEB86659FD93ull);
  IdentityParams p;
  p.skin_hue = rng.uniform(22.0, 27.0);
  p.skin_sat = rng.uniform(0.44, 0.48);
  p.skin_val = rng.uniform(0.74, 0.78);
  p.face_half_width = rng.uniform(18.2, 18.8);
  p.face_aspect = rng.uniform(1.24, 1.26);
  p.eye_spacing = rng.uniform(7.0, 10.5);
  p.eye_radius = rng.uniform(2.2, 3.6);
  p.iris_hue = kIrisHues[rng.pick(kIrisHues.size())];
  p.brow_angle = rng.uniform(-12.0, 12.0);
  p.mouth_half_width = rng.uniform(5.5, 9.0);
  p.hair_hue = kHairHues[rng.pick(kHairHues.size())];
  p.hair_val = kHairVals[rng.pick(kHairVals.size())];
  p.hairline = rng.pick(3);
  p.clothing_hue = kClothingHues[rng.pick(kClothingHues.size())];
  return p;
}

void validate(const IdentityParams& p) {
  auto check = [](double v, double lo, double hi, const char* name) {
    if (!(v >= lo && v <= hi))
      throw InvalidArgument(std::string("identity parameter ") + name + " = " + std::to_string(v) + " outside [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + "]");
  };
  check(p.skin_hue, 12.0, 38.0, "skin_hue");
  check(p.skin_sat, 0.30, 0.62, "skin_sat");
  check(p.skin_val, 0.55, 0.92, "skin_val");
  check(p.face_half_width, 16.0, 21.0, "face_half_width");
  check(p.face_aspect, 1.22, 1.28, "face_aspect");
  check(p.eye_spacing, 7.0, 10.5, "eye_spacing");
  check(p.eye_radius, 2.2, 3.6, "eye_radius");
  check(p.iris_hue, 0.0, 360.0, "iris_hue");
  check(p.brow_angle, -12.0, 12.0, "brow_angle");
  check(p.mouth_half_width, 5.5, 9.0, "mouth_half_width");
  check(p.hair_hue, 0.0, 360.0, "hair_hue");
  check(p.hair_val, 0.2, 0.6, "hair_val");
  check(p.hairline, 0, 2, "hairline");
  check(p.clothing_hue, 0.0, 360.0, "clothing_hue");
}

FaceSample render_face(const IdentityParams& params, Expression expression, Pose pose, double illumination,
                       const RenderConfig& cfg) {
  validate(params);
  if (!(illumination >= 0.5 && illumination <= 1.5))
    throw InvalidArgument("illumination " + std::to_string(illumination) + " outside [0.5, 1.5]");
  if (cfg.supersample < 1) throw InvalidArgument("supersample must be >= 1");

  const PoseMap pm = pose_map(pose, cfg);
  const Palette pal = palette_of(params);
  const ExpressionShape ex = shape_of(expression);
  const int n = cfg.frame_size, ss = cfg.supersample;
  const double inv = 1.0 / (ss * ss);

  FaceSample s;
  s.image = img::Image(n, n, 3);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double r = 0, g = 0, b = 0;
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx) {
          double u, v;
          pm.inverse(x + (sx + 0.5) / ss - 0.5, y + (sy + 0.5) / ss - 0.5, u, v);
          const Rgb c = shade(params, pal, ex, u, v);
          r += c.r, g += c.g, b += c.b;
        }
      s.image.at(x, y, 0) = std::min(1.0, r * inv * illumination);
      s.image.at(x, y, 1) = std::min(1.0, g * inv * illumination);
      s.image.at(x, y, 2) = std::min(1.0, b * inv * illumination);
    }

  s.landmarks[kLeftEye] = pm.forward(-params.eye_spacing, kEyeRow);
  s.landmarks[kRightEye] = pm.forward(params.eye_spacing, kEyeRow);
  s.landmarks[kNoseTip] = pm.forward(0.0, kNoseRow);
  s.landmarks[kMouthLeft] = pm.forward(-params.mouth_half_width, kMouthRow);
  s.landmarks[kMouthRight] = pm.forward(params.mouth_half_width, kMouthRow);

  const int half = cfg.tight_size / 2;
  s.tight = {static_cast<int>(std::lround(pm.cx)) - half, static_cast<int>(std::lround(pm.cy)) - half,
             cfg.tight_size, cfg.tight_size};
  s.context = img::grow_bbox(s.tight, cfg.context_grow);
  if (s.context.x < 0 || s.context.y < 0 || s.context.right() > n || s.context.bottom() > n)
    throw InvalidArgument("render_face: context box does not fit in the frame");
  s.expression = expression;
  s.pose = pose;
  s.illumination = illumination;
  return s;
}

std::vector<img::BoundingBox> expression_regions(const IdentityParams& p, Pose pose, const RenderConfig& cfg) {
  const PoseMap pm = pose_map(pose, cfg);
  std::vector<img::BoundingBox> out;
  // Brow reach: half-length plus thickness, for any angle and raise.
  const double reach = kBrowHalfLength + kBrowThickness;
  const double by = brow_row(p);
  for (double side : {-1.0, 1.0}) {
    const double bx = side * p.eye_spacing;
    out.push_back(bounds_of(pm, bx - reach, by - reach - 1.5, bx + reach, by + reach + 0.5, 1.5));
  }
  const double mw = p.mouth_half_width;
  out.push_back(bounds_of(pm, -mw - kLipThickness, kMouthRow - 3.0 - kLipThickness - 1.0, mw + kLipThickness,
                          kMouthRow + 3.0 + kLipThickness + 1.0, 1.5));
  return out;
}

std::string identity_name(const std::string& prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02d", index);
  return prefix + buf;
}

Corpus generate_corpus(const CorpusSpec& spec) {
  if (spec.identities < 2) throw InvalidArgument("generate_corpus: need at least 2 identities");
  if (spec.expressions.empty() || spec.poses.empty() || spec.illuminations.empty())
    throw InvalidArgument("generate_corpus: empty expression, pose or illumination list");
  Corpus c;
  for (int id = 0; id < spec.identities; ++id) {
    const IdentityParams p = identity_params(spec.seed, id);
    for (auto e : spec.expressions)
      for (auto pose : spec.poses)
        for (double il : spec.illuminations) {
          FaceSample s = render_face(p, e, pose, il, spec.render);
          s.identity = identity_name(spec.id_prefix, id);
          s.identity_index = id;
          (pose == Pose::frontal ? c.frontal : c.profile).push_back(static_cast<int>(c.samples.size()));
          c.samples.push_back(std::move(s));
        }
  }
  return c;
}

}  // namespace deid::synth
