#pragma once

// Verification experiments: seeded pair sampling per fold, probe conditions
// (original, deidentified, naive pixelation/blur), context modes, parrot
// attacks and per-fold metrics.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deid/embednet.hpp"
#include "deid/metrics.hpp"
#include "deid/pipeline.hpp"
#include "deid/synthface.hpp"

namespace deid::eval {

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

enum class ProbeCondition { original, deidentified, pixelated, blurred };
enum class ReferenceSplit { original, profile };
enum class ContextMode { context, nocontext };

std::string to_string(ProbeCondition c);
std::string to_string(ReferenceSplit r);
std::string to_string(ContextMode m);
ProbeCondition parse_probe_condition(const std::string& s);
ReferenceSplit parse_reference_split(const std::string& s);
ContextMode parse_context_mode(const std::string& s);

struct ExperimentSpec {
  ProbeCondition probe = ProbeCondition::original;
  ReferenceSplit reference = ReferenceSplit::original;
  bool parrot = false;
  ContextMode context = ContextMode::context;
  int folds = 10;
  int legit_pairs = 300;
  int impostor_pairs = 300;
  std::uint64_t seed = 1;

  /// e.g. "deidentified-vs-profile" or "blurred-parrot-vs-original".
  std::string name() const;
  /// Throws InvalidArgument unless folds >= 2 and both pair counts >= 1.
  void validate() const;
};

/// Sample indices: the first element comes from the probe split, the second
/// from the reference split.
struct Pair {
  int probe = 0;
  int reference = 0;
  bool operator==(const Pair&) const = default;
};

struct FoldPairs {
  std::vector<Pair> legit;
  std::vector<Pair> impostor;
};

struct PairCounts {
  long long legit = 0;
  long long impostor = 0;
};

/// Distinct candidate pairs. When both splits are the same list a pair is an
/// unordered pair of distinct samples; otherwise every (probe, reference)
/// combination of distinct samples counts.
PairCounts available_pairs(std::span<const synth::FaceSample> samples, std::span<const int> probe_split,
                           std::span<const int> reference_split);

/// Draws exactly spec.legit_pairs / spec.impostor_pairs pairs without
/// replacement, seeded by (spec.seed, fold). Throws InsufficientDataError
/// naming the shortfall when the splits cannot supply them.
FoldPairs sample_fold_pairs(std::span<const synth::FaceSample> samples, std::span<const int> probe_split,
                            std::span<const int> reference_split, const ExperimentSpec& spec, int fold);

/// Caps the requested pair counts at what the splits can supply. Equal
/// requests stay equal so the legit:impostor ratio is kept.
ExperimentSpec fit_pair_counts(const ExperimentSpec& spec, const PairCounts& available);

/// Context mode keeps the context box; no-context shrinks it by 10% per side.
img::BoundingBox crop_box(const img::BoundingBox& context, ContextMode mode);

enum class NaiveKind { none, pixelate, blur };

struct NaiveTransform {
  NaiveKind kind = NaiveKind::none;
  int block = 1;
  double sigma = 0.0;
};

/// Pixelation block ceil(w/8) and blur sigma w/16 for a face box of width w.
NaiveTransform naive_for_face(NaiveKind kind, const img::BoundingBox& tight);

/// Applies the transform to the tight face box of the frame.
img::Image apply_naive(const img::Image& frame, const img::BoundingBox& tight, NaiveKind kind);

/// Parrot attack: the same naive transform applied to the reference images.
std::vector<img::Image> parrot_transform(std::span<const img::Image> references,
                                         std::span<const img::BoundingBox> tight_boxes, NaiveKind kind);

/// Cosine similarities of embedded crops. Both embedding tables are indexed by
/// sample index.
ScoreSet score_pairs(const FoldPairs& pairs, std::span<const std::optional<embed::Embedding>> probe,
                     std::span<const std::optional<embed::Embedding>> reference);

/// Convenience form: embeds the crops of the paired frames, then scores.
ScoreSet score_pairs(const embed::Encoder& encoder, const FoldPairs& pairs, std::span<const img::Image> probe_frames,
                     std::span<const img::Image> reference_frames, std::span<const synth::FaceSample> samples,
                     ContextMode mode);

struct FoldResult {
  double eer = 0.0;
  double ver1 = 0.0;
  double auc = 0.0;
  RocCurve roc;
};

struct ExperimentResult {
  ExperimentSpec spec;  // with the pair counts actually used
  std::vector<FoldResult> folds;
  MetricsSummary metrics;
};

/// Subject corpus with its pose split (indices into samples).
struct EvalData {
  std::vector<synth::FaceSample> samples;
  std::vector<int> frontal;
  std::vector<int> profile;

  static EvalData from_corpus(synth::Corpus corpus);
};

/// Runs experiments over one corpus, caching transformed frames and
/// embeddings across experiments. Probe images always come from the frontal
/// split. Deidentified probes need pipeline models.
class Evaluator {
 public:
  Evaluator(const EvalData& data, const embed::Encoder& encoder, std::optional<pipeline::Models> deid,
            pipeline::PipelineConfig cfg, int threads = 1);

  ExperimentResult run(const ExperimentSpec& spec);

  /// Frame of sample `index` under a probe condition (cached).
  const img::Image& frame(ProbeCondition condition, int index);

 private:
  const std::vector<std::optional<embed::Embedding>>& embeddings(ProbeCondition variant, ContextMode mode,
                                                                 std::span<const int> indices);
  void ensure_frames(ProbeCondition variant, std::span<const int> indices);

  const EvalData& data_;
  const embed::Encoder& encoder_;
  std::optional<pipeline::Models> deid_;
  pipeline::PipelineConfig cfg_;
  int threads_;
  std::map<ProbeCondition, std::vector<std::optional<img::Image>>> frames_;
  std::map<std::pair<ProbeCondition, ContextMode>, std::vector<std::optional<embed::Embedding>>> embeddings_;
};

ExperimentResult run_experiment(const ExperimentSpec& spec, const EvalData& data, const embed::Encoder& encoder,
                                std::optional<pipeline::Models> deid, const pipeline::PipelineConfig& cfg,
                                int threads = 1);

// --- report --------------------------------------------------------------

struct ReportOptions {
  bool roc_plot = true;
};

/// Writes metrics.json, roc/<experiment>_<context>_fold<k>.csv, auc_folds.csv
/// and (optionally) roc.svg into `dir`. Throws IoError when it cannot write.
void write_report(const std::vector<ExperimentResult>& results, const std::filesystem::path& dir,
                  const ReportOptions& options = {});

struct MetricsRecord {
  std::string experiment;
  std::string context;
  int legit_pairs = 0;
  int impostor_pairs = 0;
  MetricsSummary metrics;
};

/// Parses a metrics.json written by write_report.
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

/// Text table with one row per experiment and one EER/VER-1/AUC column group
/// per context mode.
std::string format_table(const std::vector<MetricsRecord>& records);

}  // namespace deid::eval
