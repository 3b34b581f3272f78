#pragma once

// Rebuilds, from the public pipeline steps, the composed mask that
// deidentify_face blends with. Locality checks compare frame changes to it.

#include "deid/pipeline.hpp"

namespace blend_mask {

inline deid::img::Mask expected(const deid::img::Image& frame, const deid::pipeline::FaceAnnotation& face,
                                const deid::pipeline::Models& models, const deid::pipeline::PipelineConfig& cfg) {
  using namespace deid;
  const auto match = pipeline::select_identities(frame, face, models, cfg);
  const auto y = embed::identities_to_y(match, models.gallery.size(), cfg.weighting);
  const gen::AppearanceVector z(models.generator.spec().expressions, static_cast<int>(cfg.expression));
  const img::Image surrogate = gen::generate(models.generator, y, z);
  const auto h = pipeline::plan_alignment(face.landmarks, *models.generator.canonical_landmarks(), cfg.robust);
  const img::Mask kernel = img::gaussian_weight_mask({surrogate.width(), surrogate.height()});
  const img::Mask skin = pipeline::clean_mask(pipeline::skin_segment(surrogate, cfg.skin), cfg.morph_radius);
  return pipeline::compose_blend_mask(kernel, skin, h, frame.width(), frame.height());
}

}  // namespace blend_mask
