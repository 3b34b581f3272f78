#pragma once

// Glue between a RunConfig and the modules: which synthetic corpora exist,
// how each model is trained from them and which experiments are evaluated.
// The CLI and the acceptance suite both go through these helpers.

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "deid/config.hpp"
#include "deid/embednet.hpp"
#include "deid/eval.hpp"
#include "deid/gennet.hpp"
#include "deid/pipeline.hpp"
#include "deid/synthface.hpp"

namespace deid::workflow {

/// Subjects to deidentify and evaluate on (all poses and illuminations).
synth::CorpusSpec subject_corpus_spec(const config::RunConfig& cfg);
/// Generator training set and matching gallery: frontal, neutral lighting,
/// every expression.
synth::CorpusSpec gallery_corpus_spec(const config::RunConfig& cfg);
/// Encoder training population, disjoint from subjects and gallery.
synth::CorpusSpec encoder_corpus_spec(const config::RunConfig& cfg);

/// Context crops resized to the generator output, labelled by identity index
/// and expression.
std::vector<gen::TrainingExample> generator_examples(std::span<const synth::FaceSample> gallery, int out_size);

gen::GeneratorSpec generator_spec(const config::RunConfig& cfg);
embed::EncoderSpec encoder_spec(const config::RunConfig& cfg);

/// Trains the generator on the gallery corpus and attaches the canonical
/// landmark template of its neutral frames.
gen::TrainResult train_generator(const config::RunConfig& cfg, std::span<const synth::FaceSample> gallery);

/// Trains the encoder on context crops of the population corpus.
embed::EncoderTrainResult train_encoder(const config::RunConfig& cfg, std::span<const synth::FaceSample> population);

/// Context crops grouped per identity, in identity-index order.
std::vector<embed::IdentityImages> identity_groups(std::span<const synth::FaceSample> samples);

/// Mean-embedding gallery over the gallery corpus.
embed::FeatDB build_gallery(const embed::Encoder& encoder, std::span<const synth::FaceSample> gallery);

/// Rebuilds the pose split of samples loaded from a manifest.
synth::Corpus corpus_from_samples(std::vector<synth::FaceSample> samples);

/// Writes a face annotation next to every image of a corpus written by
/// synth::write_corpus. The track id is the identity's first-seen index.
void write_sidecars(const std::filesystem::path& corpus_dir);

struct FrameSet {
  std::vector<std::filesystem::path> paths;
  std::vector<img::Image> frames;
  std::vector<pipeline::FrameAnnotation> faces;
};

/// Every .ppm/.pgm file of a directory in name order, with its sidecar. A
/// frame without a sidecar has no faces.
FrameSet load_frames(const std::filesystem::path& dir);

/// One spec per (experiment, context) cell, in config order.
std::vector<eval::ExperimentSpec> experiment_grid(const config::RunConfig& cfg);

/// Runs the grid with a shared evaluator. Deidentified experiments need models.
std::vector<eval::ExperimentResult> run_evaluation(const config::RunConfig& cfg, const eval::EvalData& data,
                                                   const embed::Encoder& encoder,
                                                   std::optional<pipeline::Models> models, int threads = 1);

}  // namespace deid::workflow
