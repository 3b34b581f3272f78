#include "deid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "deid/parallel.hpp"

namespace deid::eval {

std::string to_string(ProbeCondition c) {
  switch (c) {
    case ProbeCondition::original: return "original";
    case ProbeCondition::deidentified: return "deidentified";
    case ProbeCondition::pixelated: return "pixelated";
    case ProbeCondition::blurred: return "blurred";
  }
  return "?";
}

std::string to_string(ReferenceSplit r) { return r == ReferenceSplit::original ? "original" : "profile"; }

std::string to_string(ContextMode m) { return m == ContextMode::context ? "context" : "nocontext"; }

ProbeCondition parse_probe_condition(const std::string& s) {
  for (auto c : {ProbeCondition::original, ProbeCondition::deidentified, ProbeCondition::pixelated,
                 ProbeCondition::blurred})
    if (to_string(c) == s) return c;
  throw InvalidArgument("unknown probe condition '" + s + "' (expected original, deidentified, pixelated or blurred)");
}

ReferenceSplit parse_reference_split(const std::string& s) {
  if (s == "original") return ReferenceSplit::original;
  if (s == "profile") return ReferenceSplit::profile;
  throw InvalidArgument("unknown reference split '" + s + "' (expected original or profile)");
}

ContextMode parse_context_mode(const std::string& s) {
  if (s == "context") return ContextMode::context;
  if (s == "nocontext") return ContextMode::nocontext;
  throw InvalidArgument("unknown context mode '" + s + "' (expected context or nocontext)");
}

std::string ExperimentSpec::name() const {
  return to_string(probe) + (parrot ? "-parrot" : "") + "-vs-" + to_string(reference);
}

void ExperimentSpec::validate() const {
  if (folds < 2) throw InvalidArgument("experiment: folds must be >= 2");
  if (legit_pairs < 1 || impostor_pairs < 1) throw InvalidArgument("experiment: pair counts must be >= 1");
}

// --- pair sampling ------------------------------------------------------------

namespace {

bool same_split(std::span<const int> a, std::span<const int> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

template <typename Fn>
void for_each_candidate(std::span<const int> probe, std::span<const int> ref, Fn&& fn) {
  if (same_split(probe, ref)) {
    for (std::size_t i = 0; i < probe.size(); ++i)
      for (std::size_t j = i + 1; j < probe.size(); ++j) fn(probe[i], probe[j]);
  } else {
    for (int p : probe)
      for (int r : ref)
        if (p != r) fn(p, r);
  }
}

void check_indices(std::span<const synth::FaceSample> samples, std::span<const int> split) {
  for (int i : split)
    if (i < 0 || static_cast<std::size_t>(i) >= samples.size())
      throw InvalidArgument("split index " + std::to_string(i) + " outside the corpus");
}

/// k distinct elements chosen uniformly, in draw order (partial Fisher-Yates).
std::vector<Pair> draw(std::vector<Pair> pool, std::size_t k, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

PairCounts available_pairs(std::span<const synth::FaceSample> samples, std::span<const int> probe_split,
                           std::span<const int> reference_split) {
  check_indices(samples, probe_split);
  check_indices(samples, reference_split);
  PairCounts c;
  for_each_candidate(probe_split, reference_split, [&](int p, int r) {
    (samples[p].identity == samples[r].identity ? c.legit : c.impostor) += 1;
  });
  return c;
}

FoldPairs sample_fold_pairs(std::span<const synth::FaceSample> samples, std::span<const int> probe_split,
                            std::span<const int> reference_split, const ExperimentSpec& spec, int fold) {
  spec.validate();
  if (fold < 0 || fold >= spec.folds) throw InvalidArgument("sample_fold_pairs: fold index out of range");
  check_indices(samples, probe_split);
  check_indices(samples, reference_split);
  std::vector<Pair> legit, impostor;
  for_each_candidate(probe_split, reference_split, [&](int p, int r) {
    (samples[p].identity == samples[r].identity ? legit : impostor).push_back({p, r});
  });
  if (legit.size() < static_cast<std::size_t>(spec.legit_pairs) ||
      impostor.size() < static_cast<std::size_t>(spec.impostor_pairs))
    throw InsufficientDataError("sample_fold_pairs: need " + std::to_string(spec.legit_pairs) + " legit and " +
                                std::to_string(spec.impostor_pairs) + " impostor pairs, corpus offers " +
                                std::to_string(legit.size()) + " and " + std::to_string(impostor.size()));
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(fold)};
  std::mt19937_64 rng(seq);
  FoldPairs out;
  out.legit = draw(std::move(legit), spec.legit_pairs, rng);
  out.impostor = draw(std::move(impostor), spec.impostor_pairs, rng);
  return out;
}

ExperimentSpec fit_pair_counts(const ExperimentSpec& spec, const PairCounts& available) {
  ExperimentSpec s = spec;
  if (spec.legit_pairs == spec.impostor_pairs) {
    const long long n = std::min<long long>({spec.legit_pairs, available.legit, available.impostor});
    s.legit_pairs = s.impostor_pairs = static_cast<int>(n);
  } else {
    s.legit_pairs = static_cast<int>(std::min<long long>(spec.legit_pairs, available.legit));
    s.impostor_pairs = static_cast<int>(std::min<long long>(spec.impostor_pairs, available.impostor));
  }
  if (s.legit_pairs < 1 || s.impostor_pairs < 1)
    throw InsufficientDataError("experiment " + spec.name() + ": corpus offers " + std::to_string(available.legit) +
                                " legit and " + std::to_string(available.impostor) + " impostor pairs");
  return s;
}

// --- probe conditions ---------------------------------------------------------

img::BoundingBox crop_box(const img::BoundingBox& context, ContextMode mode) {
  return mode == ContextMode::context ? context : img::shrink_bbox(context, 0.10);
}

NaiveTransform naive_for_face(NaiveKind kind, const img::BoundingBox& tight) {
  NaiveTransform t;
  t.kind = kind;
  t.block = std::max(1, (tight.w + 7) / 8);
  t.sigma = tight.w / 16.0;
  return t;
}

img::Image apply_naive(const img::Image& frame, const img::BoundingBox& tight, NaiveKind kind) {
  const NaiveTransform t = naive_for_face(kind, tight);
  switch (kind) {
    case NaiveKind::none: return frame;
    case NaiveKind::pixelate:
      return img::apply_in_region(frame, tight, [&](const img::Image& r) { return img::pixelate(r, t.block); });
    case NaiveKind::blur:
      return img::apply_in_region(frame, tight, [&](const img::Image& r) { return img::gaussian_blur(r, t.sigma); });
  }
  return frame;
}

std::vector<img::Image> parrot_transform(std::span<const img::Image> references,
                                         std::span<const img::BoundingBox> tight_boxes, NaiveKind kind) {
  if (references.size() != tight_boxes.size())
    throw InvalidArgument("parrot_transform: one face box per reference image is required");
  std::vector<img::Image> out;
  out.reserve(references.size());
  for (std::size_t i = 0; i < references.size(); ++i) out.push_back(apply_naive(references[i], tight_boxes[i], kind));
  return out;
}

// --- scoring -----------------------------------------------------------------

namespace {

const embed::Embedding& lookup(std::span<const std::optional<embed::Embedding>> table, int i) {
  if (i < 0 || static_cast<std::size_t>(i) >= table.size() || !table[i])
    throw InvalidArgument("score_pairs: no embedding for sample " + std::to_string(i));
  return *table[i];
}

}  // namespace

ScoreSet score_pairs(const FoldPairs& pairs, std::span<const std::optional<embed::Embedding>> probe,
                     std::span<const std::optional<embed::Embedding>> reference) {
  ScoreSet s;
  for (const auto& p : pairs.legit)
    s.legit.push_back(embed::cosine_similarity(lookup(probe, p.probe), lookup(reference, p.reference)));
  for (const auto& p : pairs.impostor)
    s.impostor.push_back(embed::cosine_similarity(lookup(probe, p.probe), lookup(reference, p.reference)));
  return s;
}

ScoreSet score_pairs(const embed::Encoder& encoder, const FoldPairs& pairs, std::span<const img::Image> probe_frames,
                     std::span<const img::Image> reference_frames, std::span<const synth::FaceSample> samples,
                     ContextMode mode) {
  std::vector<std::optional<embed::Embedding>> probe(samples.size()), ref(samples.size());
  auto fill = [&](auto& table, std::span<const img::Image> frames, int i) {
    if (static_cast<std::size_t>(i) >= frames.size()) throw InvalidArgument("score_pairs: missing image for sample " + std::to_string(i));
    if (!table[i]) table[i] = embed::extract_embedding(encoder, img::crop(frames[i], crop_box(samples[i].context, mode)));
  };
  for (const auto* list : {&pairs.legit, &pairs.impostor})
    for (const auto& p : *list) {
      fill(probe, probe_frames, p.probe);
      fill(ref, reference_frames, p.reference);
    }
  return score_pairs(pairs, probe, ref);
}

// --- experiments ---------------------------------------------------------------

EvalData EvalData::from_corpus(synth::Corpus corpus) {
  return {std::move(corpus.samples), std::move(corpus.frontal), std::move(corpus.profile)};
}

Evaluator::Evaluator(const EvalData& data, const embed::Encoder& encoder, std::optional<pipeline::Models> deid,
                     pipeline::PipelineConfig cfg, int threads)
    : data_(data), encoder_(encoder), deid_(std::move(deid)), cfg_(std::move(cfg)), threads_(threads) {}

void Evaluator::ensure_frames(ProbeCondition variant, std::span<const int> indices) {
  auto& table = frames_[variant];
  table.resize(data_.samples.size());
  std::vector<int> missing;
  for (int i : indices)
    if (!table[i]) missing.push_back(i);
  std::sort(missing.begin(), missing.end());
  missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
  if (variant == ProbeCondition::deidentified && !missing.empty() && !deid_)
    throw InvalidArgument("evaluator: deidentified probes need pipeline models");
  parallel_for(static_cast<int>(missing.size()), threads_, [&](int m) {
    const int i = missing[m];
    const auto& s = data_.samples[i];
    switch (variant) {
      case ProbeCondition::original: table[i] = s.image; break;
      case ProbeCondition::deidentified:
        table[i] = pipeline::deidentify_face(s.image, pipeline::annotation_of(s), *deid_, cfg_);
        break;
      case ProbeCondition::pixelated: table[i] = apply_naive(s.image, s.tight, NaiveKind::pixelate); break;
      case ProbeCondition::blurred: table[i] = apply_naive(s.image, s.tight, NaiveKind::blur); break;
    }
  });
}

const img::Image& Evaluator::frame(ProbeCondition condition, int index) {
  const int one[1] = {index};
  ensure_frames(condition, one);
  return *frames_[condition][index];
}

const std::vector<std::optional<embed::Embedding>>& Evaluator::embeddings(ProbeCondition variant, ContextMode mode,
                                                                          std::span<const int> indices) {
  ensure_frames(variant, indices);
  const auto& frames = frames_[variant];
  auto& table = embeddings_[{variant, mode}];
  table.resize(data_.samples.size());
  std::vector<int> missing;
  for (int i : indices)
    if (!table[i]) missing.push_back(i);
  std::sort(missing.begin(), missing.end());
  missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
  parallel_for(static_cast<int>(missing.size()), threads_, [&](int m) {
    const int i = missing[m];
    table[i] = embed::extract_embedding(encoder_, img::crop(*frames[i], crop_box(data_.samples[i].context, mode)));
  });
  return table;
}

ExperimentResult Evaluator::run(const ExperimentSpec& requested) {
  requested.validate();
  const std::vector<int>& probe_split = data_.frontal;
  const std::vector<int>& ref_split = requested.reference == ReferenceSplit::original ? data_.frontal : data_.profile;
  const ExperimentSpec spec = fit_pair_counts(requested, available_pairs(data_.samples, probe_split, ref_split));

  const ProbeCondition ref_variant = spec.parrot ? spec.probe : ProbeCondition::original;
  const auto& probe_emb = embeddings(spec.probe, spec.context, probe_split);
  const auto& ref_emb = embeddings(ref_variant, spec.context, ref_split);

  ExperimentResult result;
  result.spec = spec;
  result.folds.resize(spec.folds);
  parallel_for(spec.folds, threads_, [&](int f) {
    const FoldPairs pairs = sample_fold_pairs(data_.samples, probe_split, ref_split, spec, f);
    const ScoreSet scores = score_pairs(pairs, probe_emb, ref_emb);
    FoldResult& r = result.folds[f];
    r.roc = compute_roc(scores);
    r.eer = compute_eer(r.roc);
    r.ver1 = compute_ver_at_far(r.roc, 0.01);
    r.auc = compute_auc(scores);
  });
  for (const auto& r : result.folds) {
    result.metrics.eer.push_back(r.eer);
    result.metrics.ver1.push_back(r.ver1);
    result.metrics.auc.push_back(r.auc);
  }
  summarize(result.metrics);
  return result;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const EvalData& data, const embed::Encoder& encoder,
                                std::optional<pipeline::Models> deid, const pipeline::PipelineConfig& cfg,
                                int threads) {
  Evaluator ev(data, encoder, std::move(deid), cfg, threads);
  return ev.run(spec);
}

}  // namespace deid::eval
