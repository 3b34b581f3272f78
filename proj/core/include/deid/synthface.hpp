#pragma once

// Procedural cartoon faces with exact landmarks. Each identity is a fixed set
// of shape and colour parameters drawn from (corpus seed, identity index);
// expression only touches the mouth and brows, pose is an affine shear, and
// illumination scales brightness.
//
// Frame layout (defaults): 96x96 grey background, 56x56 tight box around the
// face, context box = tight box grown 25% per side (84x84). Clothing sits
// below the chin, inside the context box but outside the tight box.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deid/geom.hpp"
#include "deid/image.hpp"

namespace deid::synth {

class ManifestError : public Error {
 public:
  using Error::Error;
};

enum class Expression { neutral = 0, happy = 1, angry = 2, surprised = 3 };
enum class Pose { frontal = 0, profile = 1 };

inline constexpr int kExpressionCount = 4;
inline constexpr std::array<Expression, 4> kAllExpressions{Expression::neutral, Expression::happy, Expression::angry,
                                                           Expression::surprised};

std::string to_string(Expression e);
std::string to_string(Pose p);
/// Throws InvalidArgument for an unknown name.
Expression parse_expression(const std::string& s);
Pose parse_pose(const std::string& s);

struct IdentityParams {
  double skin_hue = 0.0;  // degrees
  double skin_sat = 0.0;
  double skin_val = 0.0;
  double face_half_width = 0.0;  // px
  double face_aspect = 0.0;      // half-height / half-width
  double eye_spacing = 0.0;      // px from the centre line
  double eye_radius = 0.0;
  double iris_hue = 0.0;
  double brow_angle = 0.0;  // degrees, positive raises the outer end
  double mouth_half_width = 0.0;
  double hair_hue = 0.0;
  double hair_val = 0.0;
  int hairline = 0;  // 0 straight, 1 peaked, 2 side-swept
  double clothing_hue = 0.0;

  bool operator==(const IdentityParams&) const = default;
};

/// Deterministic in (seed, index); every field lies in its declared range.
IdentityParams identity_params(std::uint64_t seed, int index);
/// Throws InvalidArgument naming the first out-of-range field.
void validate(const IdentityParams& p);

using Landmarks = std::array<geom::Point2, 5>;

enum LandmarkIndex { kLeftEye = 0, kRightEye = 1, kNoseTip = 2, kMouthLeft = 3, kMouthRight = 4 };

struct FaceSample {
  img::Image image;
  Landmarks landmarks{};
  img::BoundingBox tight;
  img::BoundingBox context;
  std::string identity;
  int identity_index = 0;
  Expression expression = Expression::neutral;
  Pose pose = Pose::frontal;
  double illumination = 1.0;
};

struct RenderConfig {
  int frame_size = 96;
  int tight_size = 56;
  double context_grow = 0.25;
  double profile_shift = 5.0;   // px, face centre moves right
  double profile_shear = 0.18;  // horizontal shear per px of height
  double profile_squash = 0.86; // horizontal compression
  int supersample = 2;
};

/// Rasterizes one face. Throws InvalidArgument unless illumination is in
/// [0.5, 1.5] and the parameters validate.
FaceSample render_face(const IdentityParams& params, Expression expression, Pose pose, double illumination,
                       const RenderConfig& cfg = {});

/// Boxes (frame coordinates) that contain everything an expression change can
/// touch: the two brows and the mouth.
std::vector<img::BoundingBox> expression_regions(const IdentityParams& params, Pose pose,
                                                 const RenderConfig& cfg = {});

struct CorpusSpec {
  std::uint64_t seed = 1;
  int identities = 16;
  std::vector<Expression> expressions{kAllExpressions.begin(), kAllExpressions.end()};
  std::vector<Pose> poses{Pose::frontal, Pose::profile};
  std::vector<double> illuminations{0.8, 1.2};
  std::string id_prefix = "s";
  RenderConfig render{};
};

struct Corpus {
  std::vector<FaceSample> samples;
  std::vector<int> frontal;  // indices into samples
  std::vector<int> profile;
};

/// identities x expressions x poses x illuminations samples, identity-major.
/// Throws InvalidArgument when fewer than 2 identities are requested.
Corpus generate_corpus(const CorpusSpec& spec);

std::string identity_name(const std::string& prefix, int index);

// --- manifest ----------------------------------------------------------------

struct ManifestRecord {
  std::string image;  // relative to the manifest's directory
  std::string identity;
  Expression expression = Expression::neutral;
  Pose pose = Pose::frontal;
  double illumination = 1.0;
  Landmarks landmarks{};
  img::BoundingBox tight;
  img::BoundingBox context;

  bool operator==(const ManifestRecord&) const = default;
};

ManifestRecord to_record(const FaceSample& s, const std::string& image_path);

/// CSV with a header line. Reals are written with round-trip precision.
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);
/// Parses and checks every referenced image exists; errors name the offending
/// line or path.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
std::string manifest_header();

/// Writes every sample as PPM under `dir/images/` and the manifests
/// `all.csv`, `frontal.csv` and `profile.csv` into `dir`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// Loads the images referenced by a manifest back into samples (identity_index
/// is the position of the identity in first-seen order).
std::vector<FaceSample> load_samples(const std::filesystem::path& manifest_path);

}  // namespace deid::synth
