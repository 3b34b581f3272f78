#pragma once

// Per-face deidentification: crop -> embed -> match k gallery identities ->
// generate a surrogate -> align it to the face landmarks -> segment and blend.

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deid/embednet.hpp"
#include "deid/geom.hpp"
#include "deid/gennet.hpp"
#include "deid/image.hpp"
#include "deid/synthface.hpp"

namespace deid::pipeline {

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class AnnotationError : public Error {
 public:
  using Error::Error;
};

struct FaceAnnotation {
  img::BoundingBox tight;
  img::BoundingBox context;
  synth::Landmarks landmarks{};
  std::optional<int> track;

  bool operator==(const FaceAnnotation&) const = default;
};

using FrameAnnotation = std::vector<FaceAnnotation>;

/// Throws AnnotationError unless the boxes and landmarks lie inside the frame.
void validate(const FaceAnnotation& a, int frame_w, int frame_h);

/// Sidecar text: one face per line,
///   tight x y w h, context x y w h, 10 landmark numbers, optional track id
/// whitespace separated; '#' starts a comment.
void write_annotation(const std::filesystem::path& path, const FrameAnnotation& faces);
FrameAnnotation read_annotation(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& frame);

FaceAnnotation annotation_of(const synth::FaceSample& s, std::optional<int> track = std::nullopt);

/// Hue/saturation/value bounds in 8-bit units (hue in [0,180)).
struct SkinBounds {
  std::array<double, 3> lower{0.0, 10.0, 20.0};
  std::array<double, 3> upper{200.0, 255.0, 255.0};

  bool operator==(const SkinBounds&) const = default;
};

struct PipelineConfig {
  int k = 2;
  embed::Weighting weighting = embed::Weighting::uniform;
  synth::Expression expression = synth::Expression::neutral;
  SkinBounds skin{};
  int morph_radius = 1;
  geom::RobustFitConfig robust{};
  bool identity_lock = false;
};

/// 1 where every HSV component lies within [lower, upper], else 0.
img::Mask skin_segment(const img::Image& rgb, const SkinBounds& bounds);

/// Morphological opening: erode, then dilate, with the same radius. Radius 0
/// returns the mask unchanged.
img::Mask clean_mask(const img::Mask& mask, int radius);

/// Homography from generated-image coordinates to frame coordinates.
/// Throws AlignmentError when the landmarks do not determine one.
geom::Homography plan_alignment(const synth::Landmarks& original, const gen::LandmarkTemplate& canonical,
                                const geom::RobustFitConfig& cfg);

/// warp(kernel * skin) into a frame-sized mask, zero outside the warped support.
img::Mask compose_blend_mask(const img::Mask& kernel, const img::Mask& skin, const geom::Homography& h, int frame_w,
                             int frame_h);

struct Models {
  const embed::Encoder& encoder;
  const embed::FeatDB& gallery;
  const gen::Generator& generator;
};

struct FaceReport {
  bool applied = false;
  std::string skip_reason;
  embed::MatchResult match;
};

using LogSink = std::function<void(const std::string&)>;

/// Embeds the face's context crop and returns its k closest gallery identities.
embed::MatchResult select_identities(const img::Image& frame, const FaceAnnotation& face, const Models& models,
                                     const PipelineConfig& cfg);

/// Deidentifies one face. With `preselected` the matching step is skipped.
/// Alignment failures leave the frame untouched and are reported, not thrown.
img::Image deidentify_face(const img::Image& frame, const FaceAnnotation& face, const Models& models,
                           const PipelineConfig& cfg, FaceReport* report = nullptr,
                           const embed::MatchResult* preselected = nullptr);

/// Faces are matched on the input frame and blended in annotation order, each
/// over the previous result.
img::Image deidentify_frame(const img::Image& frame, const FrameAnnotation& faces, const Models& models,
                            const PipelineConfig& cfg, std::vector<FaceReport>* reports = nullptr,
                            const LogSink& log = {});

struct SequenceResult {
  std::vector<img::Image> frames;
  std::vector<std::vector<FaceReport>> reports;  // [frame][face]
};

/// Lock off: every frame matches independently. Lock on: the identities picked
/// on a track's first frame are reused for every later frame of that track.
/// Frames are rendered on up to `threads` workers; output does not depend on it.
SequenceResult deidentify_sequence(const std::vector<img::Image>& frames, const std::vector<FrameAnnotation>& faces,
                                   const Models& models, const PipelineConfig& cfg, int threads = 1,
                                   const LogSink& log = {});

/// Canonical landmarks for a generator trained on context crops: the mean of
/// the given landmarks mapped from their context boxes into out_size x out_size
/// generated-image coordinates.
gen::LandmarkTemplate canonical_template(const std::vector<synth::FaceSample>& samples, int out_size);

/// Maps a frame-space point into the generated-image frame of a context box.
geom::Point2 to_generated(const geom::Point2& p, const img::BoundingBox& context, int out_size);

}  // namespace deid::pipeline
