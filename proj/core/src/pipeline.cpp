#include "deid/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "deid/parallel.hpp"

namespace deid::pipeline {

img::Mask skin_segment(const img::Image& rgb, const SkinBounds& bounds) {
  if (rgb.channels() != 3) throw InvalidArgument("skin_segment: expected a 3-channel image");
  for (int c = 0; c < 3; ++c)
    if (bounds.lower[c] > bounds.upper[c]) throw InvalidArgument("skin_segment: lower bound exceeds upper bound");
  const img::Image hsv = img::rgb_to_hsv(rgb);
  img::Mask out = img::make_mask(rgb.width(), rgb.height());
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x) {
      bool inside = true;
      for (int c = 0; c < 3 && inside; ++c) {
        const double v = hsv.at(x, y, c) * 255.0;
        inside = v >= bounds.lower[c] && v <= bounds.upper[c];
      }
      out.at(x, y) = inside ? 1.0 : 0.0;
    }
  return out;
}

img::Mask clean_mask(const img::Mask& mask, int radius) {
  if (radius < 0) throw InvalidArgument("clean_mask: radius must be >= 0");
  if (radius == 0) return mask;
  return img::morphology(img::morphology(mask, img::MorphOp::erode, radius), img::MorphOp::dilate, radius);
}

geom::Homography plan_alignment(const synth::Landmarks& original, const gen::LandmarkTemplate& canonical,
                                const geom::RobustFitConfig& cfg) {
  try {
    return geom::robust_homography(canonical, original, cfg).h;
  } catch (const geom::DegenerateError& e) {
    throw AlignmentError(std::string("alignment failed: ") + e.what());
  } catch (const geom::NoConsensusError& e) {
    throw AlignmentError(std::string("alignment failed: ") + e.what());
  }
}

img::Mask compose_blend_mask(const img::Mask& kernel, const img::Mask& skin, const geom::Homography& h, int frame_w,
                             int frame_h) {
  img::Mask m = geom::warp_image(img::multiply(kernel, skin), h, frame_w, frame_h, 0.0);
  for (double& v : m.data()) v = std::clamp(v, 0.0, 1.0);
  return m;
}

embed::MatchResult select_identities(const img::Image& frame, const FaceAnnotation& face, const Models& models,
                                     const PipelineConfig& cfg) {
  const embed::Embedding e = embed::extract_embedding(models.encoder, img::crop(frame, face.context));
  return embed::match_k_closest(models.gallery, e, cfg.k);
}

img::Image deidentify_face(const img::Image& frame, const FaceAnnotation& face, const Models& models,
                           const PipelineConfig& cfg, FaceReport* report, const embed::MatchResult* preselected) {
  validate(face, frame.width(), frame.height());
  const auto& canonical = models.generator.canonical_landmarks();
  if (!canonical) throw InvalidArgument("deidentify_face: generator has no canonical landmarks");
  if (models.gallery.size() != models.generator.spec().identities)
    throw InvalidArgument("deidentify_face: gallery size does not match the generator's identity count");

  FaceReport local;
  FaceReport& rep = report ? *report : local;
  rep = {};
  rep.match = preselected ? *preselected : select_identities(frame, face, models, cfg);

  geom::Homography h;
  try {
    h = plan_alignment(face.landmarks, *canonical, cfg.robust);
  } catch (const AlignmentError& e) {
    rep.skip_reason = e.what();
    return frame;
  }

  const auto y = embed::identities_to_y(rep.match, models.gallery.size(), cfg.weighting);
  const gen::AppearanceVector z(models.generator.spec().expressions, static_cast<int>(cfg.expression));
  const img::Image surrogate = gen::generate(models.generator, y, z);

  const img::Mask kernel = img::gaussian_weight_mask({surrogate.width(), surrogate.height()});
  const img::Mask skin = clean_mask(skin_segment(surrogate, cfg.skin), cfg.morph_radius);
  const img::Mask mask = compose_blend_mask(kernel, skin, h, frame.width(), frame.height());
  const img::Image warped = geom::warp_image(surrogate, h, frame.width(), frame.height(), 0.0);
  rep.applied = true;
  return img::alpha_blend(frame, warped, mask);
}

img::Image deidentify_frame(const img::Image& frame, const FrameAnnotation& faces, const Models& models,
                            const PipelineConfig& cfg, std::vector<FaceReport>* reports, const LogSink& log) {
  img::Image out = frame;
  if (reports) reports->assign(faces.size(), {});
  for (std::size_t i = 0; i < faces.size(); ++i) {
    FaceReport rep;
    validate(faces[i], frame.width(), frame.height());
    const auto pick = select_identities(frame, faces[i], models, cfg);
    out = deidentify_face(out, faces[i], models, cfg, &rep, &pick);
    if (!rep.applied && log) log("face " + std::to_string(i) + " skipped: " + rep.skip_reason);
    if (reports) (*reports)[i] = std::move(rep);
  }
  return out;
}

SequenceResult deidentify_sequence(const std::vector<img::Image>& frames, const std::vector<FrameAnnotation>& faces,
                                   const Models& models, const PipelineConfig& cfg, int threads, const LogSink& log) {
  if (frames.size() != faces.size()) throw InvalidArgument("deidentify_sequence: frame and annotation counts differ");
  const int n = static_cast<int>(frames.size());

  // Matching always reads the input frame (as deidentify_frame does), so it can
  // run up front in frame order and locked tracks see their first frame.
  std::vector<std::vector<embed::MatchResult>> picks(n);
  std::map<int, embed::MatchResult> locked;
  for (int f = 0; f < n; ++f) {
    for (const auto& face : faces[f]) {
      validate(face, frames[f].width(), frames[f].height());
      if (cfg.identity_lock && face.track) {
        auto it = locked.find(*face.track);
        if (it == locked.end()) it = locked.emplace(*face.track, select_identities(frames[f], face, models, cfg)).first;
        picks[f].push_back(it->second);
      } else {
        picks[f].push_back(select_identities(frames[f], face, models, cfg));
      }
    }
  }

  SequenceResult result;
  result.frames.resize(n);
  result.reports.resize(n);
  parallel_for(n, threads, [&](int f) {
    img::Image out = frames[f];
    auto& reps = result.reports[f];
    reps.resize(faces[f].size());
    for (std::size_t i = 0; i < faces[f].size(); ++i)
      out = deidentify_face(out, faces[f][i], models, cfg, &reps[i], &picks[f][i]);
    result.frames[f] = std::move(out);
  });
  if (log)
    for (int f = 0; f < n; ++f)
      for (std::size_t i = 0; i < result.reports[f].size(); ++i)
        if (!result.reports[f][i].applied)
          log("frame " + std::to_string(f) + " face " + std::to_string(i) +
              " skipped: " + result.reports[f][i].skip_reason);
  return result;
}

geom::Point2 to_generated(const geom::Point2& p, const img::BoundingBox& context, int out_size) {
  const double sx = context.w > 1 ? (out_size - 1.0) / (context.w - 1.0) : 1.0;
  const double sy = context.h > 1 ? (out_size - 1.0) / (context.h - 1.0) : 1.0;
  return {(p.x - context.x) * sx, (p.y - context.y) * sy};
}

gen::LandmarkTemplate canonical_template(const std::vector<synth::FaceSample>& samples, int out_size) {
  if (samples.empty()) throw InvalidArgument("canonical_template: no samples");
  gen::LandmarkTemplate t{};
  for (const auto& s : samples)
    for (int i = 0; i < 5; ++i) {
      const auto q = to_generated(s.landmarks[i], s.context, out_size);
      t[i].x += q.x / static_cast<double>(samples.size());
      t[i].y += q.y / static_cast<double>(samples.size());
    }
  return t;
}

}  // namespace deid::pipeline
