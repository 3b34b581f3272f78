#include "deid/workflow.hpp"

#include <algorithm>
#include <map>

namespace deid::workflow {

namespace {

synth::RenderConfig render_of(const config::RunConfig& cfg) {
  synth::RenderConfig r;
  r.frame_size = cfg.corpus.frame_size;
  return r;
}

}  // namespace

synth::CorpusSpec subject_corpus_spec(const config::RunConfig& cfg) {
  synth::CorpusSpec s;
  s.seed = cfg.corpus.seed;
  s.identities = cfg.corpus.identities;
  s.expressions = cfg.corpus.expressions;
  s.poses = cfg.corpus.poses;
  s.illuminations = cfg.corpus.illuminations;
  s.id_prefix = "s";
  s.render = render_of(cfg);
  return s;
}

synth::CorpusSpec gallery_corpus_spec(const config::RunConfig& cfg) {
  synth::CorpusSpec s;
  s.seed = cfg.corpus.gallery_seed;
  s.identities = cfg.corpus.gallery_identities;
  s.expressions.assign(synth::kAllExpressions.begin(), synth::kAllExpressions.end());
  s.poses = {synth::Pose::frontal};
  s.illuminations = {1.0};
  s.id_prefix = "g";
  s.render = render_of(cfg);
  return s;
}

synth::CorpusSpec encoder_corpus_spec(const config::RunConfig& cfg) {
  synth::CorpusSpec s;
  s.seed = cfg.corpus.encoder_seed;
  s.identities = cfg.corpus.encoder_identities;
  s.expressions.assign(synth::kAllExpressions.begin(), synth::kAllExpressions.end());
  s.poses = {synth::Pose::frontal, synth::Pose::profile};
  s.illuminations = cfg.corpus.illuminations;
  s.id_prefix = "t";
  s.render = render_of(cfg);
  return s;
}

std::vector<gen::TrainingExample> generator_examples(std::span<const synth::FaceSample> gallery, int out_size) {
  std::vector<gen::TrainingExample> out;
  out.reserve(gallery.size());
  for (const auto& s : gallery)
    out.push_back({s.identity_index, static_cast<int>(s.expression),
                   img::resize_bilinear(img::crop(s.image, s.context), out_size, out_size)});
  return out;
}

gen::GeneratorSpec generator_spec(const config::RunConfig& cfg) {
  gen::GeneratorSpec spec;
  spec.identities = cfg.corpus.gallery_identities;
  spec.expressions = static_cast<int>(synth::kAllExpressions.size());
  return spec;
}

embed::EncoderSpec encoder_spec(const config::RunConfig& cfg) {
  embed::EncoderSpec spec;
  spec.input_size = cfg.encoder.input_size;
  spec.embedding_dim = cfg.encoder.embedding_dim;
  spec.classes = cfg.corpus.encoder_identities;
  return spec;
}

gen::TrainResult train_generator(const config::RunConfig& cfg, std::span<const synth::FaceSample> gallery) {
  const gen::GeneratorSpec spec = generator_spec(cfg);
  const auto examples = generator_examples(gallery, spec.out_size());
  gen::TrainConfig tc;
  tc.epochs = cfg.generator.epochs;
  tc.batch_size = cfg.generator.batch_size;
  tc.adam.learning_rate = cfg.generator.learning_rate;
  tc.seed = cfg.generator.seed;
  gen::TrainResult result = gen::train_generator(examples, spec, tc);

  std::vector<synth::FaceSample> neutral;
  for (const auto& s : gallery)
    if (s.expression == synth::Expression::neutral && s.pose == synth::Pose::frontal) neutral.push_back(s);
  if (neutral.empty()) throw InvalidArgument("train_generator: gallery has no neutral frontal frames");
  result.model.set_canonical_landmarks(pipeline::canonical_template(neutral, spec.out_size()));
  return result;
}

embed::EncoderTrainResult train_encoder(const config::RunConfig& cfg, std::span<const synth::FaceSample> population) {
  std::vector<embed::LabeledImage> items;
  items.reserve(population.size());
  for (const auto& s : population) items.push_back({img::crop(s.image, s.context), s.identity_index});
  embed::EncoderTrainConfig tc;
  tc.epochs = cfg.encoder.epochs;
  tc.batch_size = cfg.encoder.batch_size;
  tc.adam.learning_rate = cfg.encoder.learning_rate;
  tc.seed = cfg.encoder.seed;
  embed::EncoderTrainResult result = embed::train_encoder(items, encoder_spec(cfg), tc);

  std::vector<std::string> labels(static_cast<std::size_t>(cfg.corpus.encoder_identities));
  for (const auto& s : population) labels.at(static_cast<std::size_t>(s.identity_index)) = s.identity;
  result.model.set_labels(std::move(labels));
  return result;
}

std::vector<embed::IdentityImages> identity_groups(std::span<const synth::FaceSample> samples) {
  std::vector<embed::IdentityImages> groups;
  for (const auto& s : samples) {
    if (s.identity_index < 0) throw InvalidArgument("identity_groups: negative identity index");
    if (static_cast<std::size_t>(s.identity_index) >= groups.size()) groups.resize(s.identity_index + 1);
    auto& g = groups[s.identity_index];
    if (g.id.empty()) g.id = s.identity;
    g.images.push_back(img::crop(s.image, s.context));
  }
  for (const auto& g : groups)
    if (g.images.empty()) throw InvalidArgument("identity_groups: identity indices are not contiguous");
  return groups;
}

embed::FeatDB build_gallery(const embed::Encoder& encoder, std::span<const synth::FaceSample> gallery) {
  return embed::build_gallery(encoder, identity_groups(gallery));
}

synth::Corpus corpus_from_samples(std::vector<synth::FaceSample> samples) {
  synth::Corpus c;
  c.samples = std::move(samples);
  for (std::size_t i = 0; i < c.samples.size(); ++i)
    (c.samples[i].pose == synth::Pose::frontal ? c.frontal : c.profile).push_back(static_cast<int>(i));
  return c;
}

void write_sidecars(const std::filesystem::path& corpus_dir) {
  std::map<std::string, int> track;
  for (const auto& r : synth::read_manifest(corpus_dir / "all.csv")) {
    const int id = track.emplace(r.identity, static_cast<int>(track.size())).first->second;
    pipeline::write_annotation(pipeline::sidecar_path(corpus_dir / r.image),
                               {pipeline::FaceAnnotation{r.tight, r.context, r.landmarks, id}});
  }
}

FrameSet load_frames(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("frame directory not found: " + dir.string());
  FrameSet set;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) set.paths.push_back(entry.path());
  }
  std::sort(set.paths.begin(), set.paths.end());
  for (const auto& p : set.paths) {
    set.frames.push_back(img::load_image(p));
    const auto side = pipeline::sidecar_path(p);
    set.faces.push_back(std::filesystem::exists(side) ? pipeline::read_annotation(side) : pipeline::FrameAnnotation{});
  }
  return set;
}

std::vector<eval::ExperimentSpec> experiment_grid(const config::RunConfig& cfg) {
  std::vector<eval::ExperimentSpec> out;
  for (const auto& e : cfg.evaluation.experiments)
    for (auto mode : cfg.evaluation.contexts) {
      eval::ExperimentSpec s;
      s.probe = e.probe;
      s.reference = e.reference;
      s.parrot = e.parrot;
      s.context = mode;
      s.folds = cfg.evaluation.folds;
      s.legit_pairs = cfg.evaluation.legit_pairs;
      s.impostor_pairs = cfg.evaluation.impostor_pairs;
      s.seed = cfg.evaluation.seed;
      out.push_back(s);
    }
  return out;
}

std::vector<eval::ExperimentResult> run_evaluation(const config::RunConfig& cfg, const eval::EvalData& data,
                                                   const embed::Encoder& encoder,
                                                   std::optional<pipeline::Models> models, int threads) {
  eval::Evaluator evaluator(data, encoder, models, cfg.pipeline, threads);
  std::vector<eval::ExperimentResult> out;
  for (const auto& spec : experiment_grid(cfg)) out.push_back(evaluator.run(spec));
  return out;
}

}  // namespace deid::workflow
